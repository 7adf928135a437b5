"""Exact state propagation, the average-Hamiltonian reference, and fidelity.

``exact_evolve`` applies delta rotations as exact unitaries and evolves the
free intervals under ``H_Z + H_D`` (dense).  Drive-free intervals use the
eigendecomposition of the static Hamiltonian.  Inside drive windows the
interval is cut into midpoint steps ``exp(-i H(t_mid) dt)``.

For one collective drive and a static part commuting with ``F_z``,
``H(t) = R(t) (H0 - w_RF F_x) R(t)^dag`` with diagonal ``R``, so a run of
``m`` midpoint steps collapses to ``R(t_m) (E R(-dtheta))^(m-1) E R(t_1)^dag``.
Whole cycles are then built in batches with numpy, which makes long
drive windows (tens of thousands of cycles) cheap.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy.linalg import null_space

from .algebra import OperatorSum, to_dense
from .model import SelectiveDrive, SpinSystem, build_dipolar, build_zeeman
from .sequence import Delta, DriveWindow, Free, PulseSequence

log = logging.getLogger(__name__)

NORM_ATOL = 1e-10
_CHUNK = 2048


# -- states -------------------------------------------------------------------

def random_state(seed: int, n: int) -> np.ndarray:
    """Haar-random pure state on ``n`` spins from a PCG64 stream."""
    if n < 1:
        raise ValueError("need at least one spin")
    rng = np.random.Generator(np.random.PCG64(seed))
    dim = 2 ** n
    vec = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """Squared overlap ``|<a|b>|^2``."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"state dimensions differ: {a.shape} vs {b.shape}")
    for v in (a, b):
        if abs(np.linalg.norm(v) - 1.0) > NORM_ATOL:
            raise ValueError("fidelity needs unit-norm states")
    return float(min(1.0, abs(np.vdot(a, b)) ** 2))


def renormalize(psi: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(psi)
    log.info("renormalizing state (norm %.3e)", norm)
    return psi / norm


def reduced_density(psi: np.ndarray, keep: tuple[int, ...], n: int) -> np.ndarray:
    """Partial trace of ``|psi><psi|`` onto the sites in ``keep``."""
    tensor = np.asarray(psi).reshape([2] * n)
    keep = tuple(sorted(keep))
    drop = [s for s in range(n) if s not in keep]
    moved = np.moveaxis(tensor, list(keep) + drop, list(range(n)))
    mat = moved.reshape(2 ** len(keep), -1)
    return mat @ mat.conj().T


def state_fidelity(rho: np.ndarray, phi: np.ndarray) -> float:
    """``<phi|rho|phi> / tr(rho)`` for a pure reference ``phi``."""
    return 1.0 - state_infidelity(rho, phi)


def state_infidelity(rho: np.ndarray, phi: np.ndarray) -> float:
    """``1 - <phi|rho|phi> / tr(rho)`` summed over the complement of ``phi``.

    Summing the small populations directly keeps the result accurate far
    below the rounding level of the fidelity itself, and dividing by the
    trace removes slow norm drift of long runs.
    """
    phi = np.asarray(phi) / np.linalg.norm(phi)
    comp = null_space(phi.conj()[None, :])
    leak = np.real(np.einsum("ia,ij,ja->", comp.conj(), rho, comp))
    return float(min(1.0, max(0.0, leak / np.real(np.trace(rho)))))


# -- unitaries ----------------------------------------------------------------

def expm_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i h t)`` through the eigendecomposition of Hermitian ``h``."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def rotation_unitary(delta: Delta, n: int) -> np.ndarray:
    r = delta.rotation
    u = r.unitary()
    if r.site is None:
        return reduce(np.kron, [u] * n)
    if not 0 <= r.site < n:
        raise IndexError(f"pulse addresses spin {r.site} in a {n}-spin system")
    eye = np.eye(2, dtype=complex)
    return reduce(np.kron, [u if s == r.site else eye for s in range(n)])


def _collective(n: int, axis: str) -> np.ndarray:
    return to_dense(sum((OperatorSum.spin(n, k, axis) for k in range(n)), OperatorSum.zero(n)))


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (samples, dim) or (samples, dim, n_states)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


class _Engine:
    """Precomputed pieces for one (system, sequence, drives, dt) run."""

    def __init__(self, system, seq, drives, dt):
        self.n = system.n
        self.seq = seq
        self.dt = dt
        h0 = build_dipolar(system)
        if not seq.zeeman_suppressed:
            h0 = h0 + build_zeeman(system)
        self.h0 = to_dense(h0)
        self.w0, self.v0 = np.linalg.eigh(self.h0)
        self.fx = _collective(self.n, "X")
        self.fy = _collective(self.n, "Y")
        fz = _collective(self.n, "Z")
        self.mz = np.real(np.diag(fz))
        self.fz_commutes = np.allclose(self.h0 @ fz, fz @ self.h0, atol=1e-12 * max(1.0, np.abs(self.h0).max()))
        self.drives = list(drives)
        self._free_cache: dict[float, np.ndarray] = {}
        self._kernel_cache: dict = {}
        # template: pulses as matrices, free intervals as (offset, length)
        self.template = []
        t = 0.0
        for e in seq.events:
            if isinstance(e, Delta):
                self.template.append(("pulse", rotation_unitary(e, self.n)))
            elif isinstance(e, Free):
                self.template.append(("free", t, e.duration))
                t += e.duration
        self.tc = t

    def free(self, length: float) -> np.ndarray:
        u = self._free_cache.get(length)
        if u is None:
            u = (self.v0 * np.exp(-1j * self.w0 * length)) @ self.v0.conj().T
            self._free_cache[length] = u
        return u

    def steps(self, length: float) -> tuple[int, float]:
        m = max(1, math.ceil(length / self.dt - 1e-9))
        return m, length / m

    def drive_matrix(self, drive: SelectiveDrive, t: float) -> np.ndarray:
        a = drive.drive_angle(t)
        return -drive.amplitude * (math.cos(a) * self.fx - math.sin(a) * self.fy)

    def kernel(self, drive: SelectiveDrive, length: float):
        """``(E R(-dtheta))^(m-1) E`` for a drive segment of ``length``."""
        key = (id(drive), length)
        hit = self._kernel_cache.get(key)
        if hit is None:
            m, step = self.steps(length)
            e = expm_hermitian(self.h0 - drive.amplitude * self.fx, step)
            back = np.exp(-1j * drive.carrier_offset * step * self.mz)
            k = np.linalg.matrix_power(e * back[None, :], m - 1) @ e
            hit = (k, m, step)
            self._kernel_cache[key] = hit
        return hit

    def phases(self, theta) -> np.ndarray:
        """Diagonal of ``R(theta) = exp(i theta F_z)``; broadcasts over theta."""
        return np.exp(1j * np.multiply.outer(theta, self.mz))

    # -- segments --------------------------------------------------------------
    def segment(self, a: float, b: float) -> np.ndarray:
        """Propagator over the free segment [a, b) of absolute time."""
        length = b - a
        mid = 0.5 * (a + b)
        active = [d for d in self.drives if d.active(mid) and d.amplitude > 0]
        if not active:
            return self.free(length)
        if len(active) == 1 and self.fz_commutes:
            d = active[0]
            k, m, step = self.kernel(d, length)
            first = d.drive_angle(a + step / 2)
            last = first + (m - 1) * d.carrier_offset * step
            return self.phases(last)[:, None] * k * self.phases(first).conj()[None, :]
        m, step = self.steps(length)
        u = np.eye(2 ** self.n, dtype=complex)
        for i in range(m):
            tm = a + (i + 0.5) * step
            h = self.h0 + sum(self.drive_matrix(d, tm) for d in active if d.active(tm))
            u = expm_hermitian(h, step) @ u
        return u

    def cycle_generic(self, t0: float, psi, record=None):
        """Advance ``psi`` over the cycle starting at ``t0``.

        ``record`` is a sorted list of absolute times inside the cycle; the
        state at each is appended to the returned list.
        """
        cuts = sorted({d.start for d in self.drives} | {d.end for d in self.drives})
        marks = list(record or [])
        out = []
        for item in self.template:
            if item[0] == "pulse":
                psi = item[1] @ psi
                continue
            a, b = t0 + item[1], t0 + item[1] + item[2]
            points = sorted({a, b} | {c for c in cuts + marks if a < c < b})
            for lo, hi in zip(points[:-1], points[1:]):
                psi = self.segment(lo, hi) @ psi
                while marks and abs(marks[0] - hi) <= 1e-12 * max(1.0, abs(hi)):
                    out.append((marks.pop(0), psi.copy()))
        return psi, out

    def cycle_free(self) -> np.ndarray:
        u = np.eye(2 ** self.n, dtype=complex)
        for item in self.template:
            u = (item[1] if item[0] == "pulse" else self.free(item[2])) @ u
        return u

    def cycles_driven(self, drive: SelectiveDrive, starts: np.ndarray) -> np.ndarray:
        """Stack of cycle propagators for cycles fully inside ``drive``."""
        dim = 2 ** self.n
        mats = np.broadcast_to(np.eye(dim, dtype=complex), (len(starts), dim, dim)).copy()
        for item in self.template:
            if item[0] == "pulse":
                mats = np.matmul(item[1], mats)
                continue
            k, m, step = self.kernel(drive, item[2])
            first = drive.carrier_offset * (starts + item[1] + step / 2 - drive.start) - drive.phase
            last = first + (m - 1) * drive.carrier_offset * step
            rl, rf = self.phases(last), self.phases(first).conj()
            mats = rl[:, :, None] * np.matmul(k, rf[:, :, None] * mats)
        return mats


def _default_dt(system: SpinSystem, seq: PulseSequence, drives) -> float:
    rates = [abs(d.amplitude) for d in drives if d.amplitude > 0]
    if not seq.zeeman_suppressed:
        rates += [abs(w) for w in system.offsets if w != 0]
    bound = min((2 * math.pi / r for r in rates), default=math.inf) / 20
    longest = max((f.duration for f in seq.free_intervals), default=1.0)
    return min(bound, longest)


def exact_evolve(system: SpinSystem, seq: PulseSequence, drives=(), dt: float | None = None,
                 psi0: np.ndarray | None = None, n_cycles: int | None = None,
                 sample_times=(), stride: int | None = 1) -> Trajectory:
    """Time-ordered evolution over ``n_cycles`` repetitions of ``seq``.

    Parameters
    ----------
    drives : sequence of SelectiveDrive
        Absolute-time drive windows, added to any ``DriveWindow`` events.
    dt : float, optional
        Midpoint step inside drive windows.  Must not exceed 1/20 of the
        fastest retained period; each segment uses the largest step not
        above ``dt`` that divides it.
    psi0 : array
        Initial state of shape ``(2**n,)`` or ``(2**n, k)`` for ``k`` states
        evolved together.
    n_cycles : int, optional
        Defaults to enough cycles to cover every drive window.
    sample_times : iterable of float
        Extra sampling times inside the run.
    stride : int or None
        Record every ``stride``-th cycle boundary; ``None`` records only the
        start and the end.
    """
    drives = list(drives) + [e.drive for e in seq.events if isinstance(e, DriveWindow)]
    tc = seq.cycle_time
    if tc <= 0:
        raise ValueError("sequence has no free evolution")
    limit = _default_dt(system, seq, drives)
    if dt is None:
        dt = limit
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dt > limit * (1 + 1e-12):
        raise ValueError(f"dt={dt:.3e} exceeds 1/20 of the fastest period ({limit:.3e})")
    if psi0 is None:
        raise ValueError("psi0 is required")
    psi = np.array(psi0, dtype=complex)
    if psi.shape[0] != 2 ** system.n:
        raise ValueError(f"state dimension {psi.shape[0]} does not match {system.n} spins")
    if n_cycles is None:
        end = max((d.end for d in drives), default=tc)
        n_cycles = max(1, math.ceil(end / tc - 1e-9))
    for f in seq.free_intervals:
        m = math.ceil(f.duration / dt - 1e-9)
        if drives and abs(f.duration / m - dt) > 1e-12 * dt:
            log.debug("dt adjusted to %.6g to divide a %.6g interval", f.duration / m, f.duration)

    eng = _Engine(system, seq, drives, dt)
    marks = sorted(t for t in sample_times if 0 < t < n_cycles * tc)
    times, states = [0.0], [psi.copy()]
    free_u = None

    on_boundary = {round(m / tc) for m in marks if abs(m / tc - round(m / tc)) < 1e-9}

    def keep(c):
        return (stride is not None and c % stride == 0) or c == n_cycles or c in on_boundary

    c = 0
    while c < n_cycles:
        t0 = c * tc
        inside = [m for m in marks if t0 < m < t0 + tc]
        touching = [d for d in drives if d.amplitude > 0 and d.start < t0 + tc and d.end > t0]
        full = (len(touching) == 1 and eng.fz_commutes and not inside
                and touching[0].start <= t0 and touching[0].end >= t0 + tc)
        if not touching and not inside:
            if free_u is None:
                free_u = eng.cycle_free()
            psi = free_u @ psi
            c += 1
            if keep(c):
                times.append(c * tc)
                states.append(psi.copy())
            continue
        if full:
            d = touching[0]
            # stop before the drive ends, another drive starts or a sample is due
            stops = [d.end] + [o.start for o in drives if o is not d and o.amplitude > 0
                               and o.start >= t0 + tc] + [m for m in marks if m >= t0 + tc]
            bound = min(stops)
            last = min(n_cycles, int(math.floor((bound - 1e-12 * max(1.0, bound)) / tc + 1e-9)))
            last = max(last, c + 1)
            while c < last:
                hi = min(last, c + _CHUNK)
                mats = eng.cycles_driven(d, np.arange(c, hi) * tc)
                for u in mats:
                    psi = u @ psi
                    c += 1
                    if keep(c):
                        times.append(c * tc)
                        states.append(psi.copy())
            continue
        psi, extra = eng.cycle_generic(t0, psi, inside)
        for t, s in extra:
            times.append(t)
            states.append(s)
        c += 1
        if keep(c):
            times.append(c * tc)
            states.append(psi.copy())

    order = np.argsort(times, kind="stable")
    return Trajectory(np.asarray(times)[order], np.asarray(states)[order])


def aht_evolve(hz_bar: OperatorSum, hsec_bar: OperatorSum, t: float, psi0: np.ndarray) -> np.ndarray:
    """``exp(-i Hz t) exp(-i Hsec t) psi0``."""
    psi = np.asarray(psi0, dtype=complex)
    if hz_bar.n != hsec_bar.n or psi.shape[0] != 2 ** hz_bar.n:
        raise ValueError("operator and state dimensions disagree")
    if t == 0:
        return psi.copy()
    psi = expm_hermitian(to_dense(hsec_bar), t) @ psi
    return expm_hermitian(to_dense(hz_bar), t) @ psi
