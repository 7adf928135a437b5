"""Packaged studies built on the propagator and the averaging code.

Every study is deterministic given its arguments; the grid scan writes its
results by index, so running points in a process pool gives the same array
as running them in order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .aht import (TABLE_LAYOUT, average0, effective_pair_coupling, magnus1, offset_vectors,
                  secular_selective, table_closed_form)
from .algebra import OperatorSum, op_norm
from .model import SelectiveDrive, SpinSystem, build_zeeman, dipolar_pair, heisenberg_pair
from .propagator import (aht_evolve, exact_evolve, random_state, reduced_density,
                         state_fidelity, state_infidelity)
from .sequence import NONE, SYMMETRIZED, Free, PulseSequence, build_mrev16, build_super_whh

RECOUPLED_FACTOR = 8.0 / 9.0


def log_grid(lo: float, hi: float, num: int) -> np.ndarray:
    if num < 1 or not (0 < lo <= hi):
        raise ValueError("log grid needs 0 < lo <= hi and at least one point")
    return np.logspace(math.log10(lo), math.log10(hi), num)


DEFAULT_TAU_D = (1e-4, 1e-1, 16)
DEFAULT_TAU_DW = (1e-3, 1.0, 16)
# midpoint step as a fraction of min(period/20, tau); halving it moves the
# worst grid corner by < 1e-6
DEFAULT_DT_FACTOR = 0.125


@dataclass(frozen=True)
class ScanResult:
    """Values on a rectangular grid; ``values[i, j]`` sits at ``(x[j], y[i])``."""

    x_label: str
    x: np.ndarray
    y_label: str
    y: np.ndarray
    values: np.ndarray
    value_label: str = "fidelity"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != (len(self.y), len(self.x)):
            raise ValueError("values do not match the axes")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scan produced non-finite values")

    def rows(self):
        """``(x, y, value)`` triples, x varying slowest."""
        for j, xv in enumerate(self.x):
            for i, yv in enumerate(self.y):
                yield float(xv), float(yv), float(self.values[i, j])


# -- fidelity map --------------------------------------------------------------

@dataclass(frozen=True)
class ScanPoint:
    tau_d: float
    tau_dw: float
    tau: float
    phase: float
    rf_ratio: float
    seeds: tuple
    dt_factor: float | None = None


def fig2_system(tau: float, tau_d: float, tau_dw: float) -> SpinSystem:
    """Spin 0 (driven, offset ``dw``) coupled to spin 1 sitting on the carrier."""
    return SpinSystem.from_pairs([tau_dw / tau, 0.0], {(0, 1): tau_d / tau})


def scan_point(point: ScanPoint) -> tuple[float, dict]:
    """Mean fidelity between exact evolution and the averaged-Hamiltonian prediction."""
    tau = point.tau
    system = fig2_system(tau, point.tau_d, point.tau_dw)
    seq = build_mrev16(tau)
    vectors = offset_vectors(seq)
    dw = system.offsets[0]
    amp = point.rf_ratio * dw
    # the MREV-16 secular drive rotates at half the bare Rabi rate
    t_pi = math.pi / (amp / 2)
    drive = SelectiveDrive(0, amp, float(np.linalg.norm(vectors.zeta)) * dw,
                           point.phase, 0.0, t_pi)
    n_cycles = math.ceil(t_pi / seq.cycle_time - 1e-9)
    dt = None
    if point.dt_factor is not None:
        dt = point.dt_factor * min(2 * math.pi / dw / 20, seq.cycle_time / 24)
    psi0 = np.stack([random_state(s, 2) for s in point.seeds], axis=1)
    final = exact_evolve(system, seq, [drive], dt=dt, psi0=psi0, n_cycles=n_cycles,
                         stride=None).final
    hz = average0(seq, build_zeeman(system))
    hsec = secular_selective(vectors, amp, point.phase, target=0, n=2)
    ref = aht_evolve(hz, hsec, t_pi, psi0)
    ref = aht_evolve(hz, OperatorSum.zero(2), n_cycles * seq.cycle_time - t_pi, ref)
    fids = np.abs(np.sum(final.conj() * ref, axis=0)) ** 2
    return float(np.mean(fids)), {"n_cycles": n_cycles, "t_pi": t_pi}


def _run_points(points, workers: int):
    if workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(scan_point, points))
    return [scan_point(p) for p in points]


def fidelity_scan(tau_d=None, tau_dw=None, seeds: int = 3, phase: float = 0.7,
                  rf_ratio: float = 0.01, tau: float = 1e-6, seed: int = 0,
                  dt_factor: float | None = DEFAULT_DT_FACTOR, workers: int = 1) -> ScanResult:
    """Two-spin MREV-16 + selective pi map over ``tau*D`` and ``tau*dw``.

    Parameters
    ----------
    tau_d, tau_dw : array-like, optional
        Grid values of ``tau*D_jk`` and ``tau*dw_jk``; default 16 log-spaced
        points over [1e-4, 1e-1] and [1e-3, 1].
    seeds : int
        Number of random initial states, seeded ``seed, seed+1, ...``.
    phase : float
        Drive phase in radians.
    rf_ratio : float
        Drive amplitude as a fraction of ``dw_jk``.
    dt_factor : float, optional
        Midpoint step as a multiple of ``min(period/20, tau)``; ``None`` uses
        the largest step the propagator allows.
    """
    xs = log_grid(*DEFAULT_TAU_D) if tau_d is None else np.asarray(tau_d, dtype=float)
    ys = log_grid(*DEFAULT_TAU_DW) if tau_dw is None else np.asarray(tau_dw, dtype=float)
    if xs.size == 0 or ys.size == 0:
        raise ValueError("scan grid is empty")
    if seeds < 1:
        raise ValueError("need at least one seed")
    if np.any(xs < 0) or np.any(ys <= 0):
        raise ValueError("tau*D must be >= 0 and tau*dw > 0")
    if rf_ratio <= 0:
        raise ValueError("rf_ratio must be positive")
    seed_list = tuple(seed + i for i in range(seeds))
    points = [ScanPoint(float(x), float(y), tau, phase, rf_ratio, seed_list, dt_factor)
              for y in ys for x in xs]
    results = _run_points(points, workers)
    values = np.array([r[0] for r in results]).reshape(len(ys), len(xs))
    meta = {
        "sequence": "MREV-16 " + build_mrev16(tau).describe(),
        "tau": tau,
        "phase_rad": phase,
        "rf_ratio": rf_ratio,
        "seeds": list(seed_list),
        "dt_factor": dt_factor,
        "drive_duration": "pi / (omega_RF / 2)",
    }
    return ScanResult("tau_D", xs, "tau_dw", ys, values, "fidelity", meta)


def dt_convergence(tau_d: float, tau_dw: float, seeds: int = 3,
                   dt_factor: float = DEFAULT_DT_FACTOR, **kw) -> float:
    """Fidelity change when the midpoint step is halved at one grid point."""
    base = dict(tau=1e-6, phase=0.7, rf_ratio=0.01, seeds=tuple(range(seeds)))
    base.update(kw)
    coarse = scan_point(ScanPoint(tau_d, tau_dw, dt_factor=dt_factor, **base))[0]
    fine = scan_point(ScanPoint(tau_d, tau_dw, dt_factor=dt_factor / 2, **base))[0]
    return abs(coarse - fine)


# -- recoupling ----------------------------------------------------------------

@dataclass(frozen=True)
class RecouplingReport:
    target_pair: tuple
    pair_effective: dict
    deviation_norms: dict
    ratio: float
    exact: bool
    fidelity: float | None = None
    spectator_error: float | None = None
    spectator_angle: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(v < 0 for v in self.deviation_norms.values()):
            raise ValueError("deviation norms must be non-negative")


def chain_couplings(n: int, d: float) -> SpinSystem:
    """Linear chain with ``D_ab = d / |a - b|^3``.

    Offsets are spread as ``0, 1, 2, ...`` rad/s; the idealized cycles
    never see them.
    """
    return SpinSystem.from_pairs(np.arange(n, dtype=float), {
        (a, b): d / (b - a) ** 3 for a in range(n) for b in range(a + 1, n)})


def recoupling_check(n: int, k: int, l: int, T: float, mode: str = SYMMETRIZED,
                     system: SpinSystem | None = None, simulate: bool = True,
                     duration: float | None = None, seed: int = 0) -> RecouplingReport:
    """Verify that the super-WHH cycle keeps only ``(8/9) D_kl I_k.I_l``.

    The pair averages come from ``average0`` on each pair's dipolar term.
    With ``simulate`` the cycle is also run exactly (idealized pi trains) on
    a product state ``|a>|b>|c...>``.  ``fidelity`` is ``<phi|rho_kl|phi>``
    with ``phi`` the ideally recoupled pair state and ``rho_kl`` the
    simulated reduced state; ``spectator_error`` is one minus the same
    overlap for the spectators, which should not move at all, and
    ``spectator_angle`` its Bures angle ``arccos(sqrt(F))``.
    """
    if n < 2:
        raise ValueError("need at least two spins")
    if not (0 <= k < n and 0 <= l < n) or k == l:
        raise IndexError(f"pair ({k}, {l}) invalid for {n} spins")
    if system is None:
        system = chain_couplings(n, 1.0)
    if system.n != n:
        raise ValueError("system size does not match n")
    sc = build_super_whh(k, l, T, mode)
    seq = sc.sequence
    d_kl = float(system.couplings[k, l])
    pair_eff, dev = {}, {}
    for a in range(n):
        for b in range(a + 1, n):
            eff = average0(seq, dipolar_pair(n, a, b, float(system.couplings[a, b])))
            pair_eff[(a, b)] = eff
            if {a, b} == {k, l}:
                want = heisenberg_pair(n, a, b, RECOUPLED_FACTOR * d_kl)
                dev[(a, b)] = op_norm(eff - want)
            else:
                dev[(a, b)] = op_norm(eff)
    target = pair_eff[tuple(sorted((k, l)))]
    word = ["E"] * n
    word[k] = word[l] = "X"
    ratio = target.coeff("".join(word)).real / d_kl if d_kl else float("nan")
    exact = all(v == 0 for v in dev.values())
    report = dict(target_pair=(k, l), pair_effective=pair_eff, deviation_norms=dev,
                  ratio=ratio, exact=exact,
                  metadata={"mode": mode, "T": T, "cycle_time": seq.cycle_time,
                            "description": seq.describe()})
    if simulate:
        report.update(_simulate_recoupling(system, seq, k, l, duration, seed))
    return RecouplingReport(**report)


def _simulate_recoupling(system, seq, k, l, duration, seed):
    n = system.n
    d_kl = float(system.couplings[k, l])
    if duration is None:
        duration = 1.0 / abs(d_kl)
    n_cycles = max(1, round(duration / seq.cycle_time))
    t = n_cycles * seq.cycle_time
    singles = [random_state(seed + s, 1) for s in range(n)]
    psi0 = singles[0]
    for s in singles[1:]:
        psi0 = np.kron(psi0, s)
    final = exact_evolve(system, seq, [], psi0=psi0, n_cycles=n_cycles, stride=None).final
    pair = np.kron(singles[min(k, l)], singles[max(k, l)])
    ideal = aht_evolve(heisenberg_pair(2, 0, 1, RECOUPLED_FACTOR * d_kl),
                       OperatorSum.zero(2), t, pair)
    fid = state_fidelity(reduced_density(final, (k, l), n), ideal)
    spectators = [s for s in range(n) if s not in (k, l)]
    spec_err = spec_angle = None
    if spectators:
        ref = singles[spectators[0]]
        for s in spectators[1:]:
            ref = np.kron(ref, singles[s])
        spec_err = state_infidelity(reduced_density(final, tuple(spectators), n), ref)
        spec_angle = math.asin(math.sqrt(spec_err))
    return {"fidelity": fid, "spectator_error": spec_err, "spectator_angle": spec_angle}


def recoupling_table(D: float = 1.0, T: float = 1.0) -> dict:
    """Every (alpha, beta) W-subcycle pair with its average and expected entry."""
    forms = table_closed_form(D)
    out = {}
    for a in (NONE, "X", "Y", "Z"):
        for b in (NONE, "X", "Y", "Z"):
            got = effective_pair_coupling(a, b, D, T)
            name = TABLE_LAYOUT[a][b]
            out[(a, b)] = {"entry": name, "average": got, "matches": got == forms[name]}
    return out


# -- selectivity ---------------------------------------------------------------

def predicted_selectivity(delta_omega: float, omega_rf: float) -> float:
    """``|sin(x)/x|`` at ``x = pi dw / (2 w_RF)``."""
    if omega_rf <= 0:
        raise ValueError("omega_rf must be positive")
    x = math.pi * delta_omega / (2 * omega_rf)
    return 1.0 if x == 0 else abs(math.sin(x) / x)


def selectivity_error(delta_omega: float, omega_rf: float,
                      duration: float | None = None) -> tuple[float, float]:
    """Predicted and simulated error on a neighbour of a soft pi pulse.

    Two uncoupled spins: the target on the carrier and the neighbour at
    ``delta_omega``.  Both start in ``|up>``.  The drive is resonant with
    the target for ``duration`` (default ``pi / omega_rf``).  The simulated
    error is ``1 - <up|rho_neighbour|up>``; without the drive the neighbour
    would only pick up a phase.
    """
    predicted = predicted_selectivity(delta_omega, omega_rf)
    if duration is None:
        duration = math.pi / omega_rf
    system = SpinSystem(np.array([0.0, float(delta_omega)]), np.zeros((2, 2)))
    seq = PulseSequence((Free(duration),))
    drive = SelectiveDrive(0, omega_rf, 0.0, 0.0, 0.0, duration)
    up = np.array([1, 0, 0, 0], dtype=complex)
    final = exact_evolve(system, seq, [drive], psi0=up, n_cycles=1, stride=None).final
    rho = reduced_density(final, (1,), 2)
    return predicted, float(1.0 - np.real(rho[0, 0]))


# -- symmetry ------------------------------------------------------------------

@dataclass(frozen=True)
class SymmetryReport:
    h0_norm: float
    h1_norm: float
    h0_relative: float
    h1_relative: float
    h0_vanishes: bool
    h1_vanishes: bool


def symmetry_order_check(seq: PulseSequence, h: OperatorSum, tol: float = 1e-12) -> SymmetryReport:
    """Norms of the zeroth and first average terms.

    Relative sizes are ``|H0|/|h|`` and ``|H1|/(|h|^2 t_c)``.
    """
    if not seq.closes():
        raise ValueError("symmetry check needs a closed cycle")
    scale = op_norm(h)
    h0, h1 = op_norm(average0(seq, h)), op_norm(magnus1(seq, h))
    r0 = h0 / scale if scale else h0
    r1 = h1 / (scale ** 2 * seq.cycle_time) if scale else h1
    return SymmetryReport(h0, h1, r0, r1, r0 <= tol, r1 <= tol)
