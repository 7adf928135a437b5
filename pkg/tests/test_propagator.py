import math

import numpy as np
import pytest
from scipy.linalg import expm

from oracle import PAULI, rotation, spin_op, toggled_intervals
from recouple.aht import average0
from recouple.algebra import OperatorSum, to_dense
from recouple.model import SelectiveDrive, SpinSystem, build_dipolar, build_zeeman
from recouple.propagator import (aht_evolve, exact_evolve, fidelity, random_state,
                                 reduced_density, state_infidelity)
from recouple.sequence import (Delta, Free, PulseSequence, build_mrev16, build_w_cycle,
                               build_whh4, expand_cycle)


def test_random_state_deterministic_and_normalized():
    a, b = random_state(7, 3), random_state(7, 3)
    assert np.array_equal(a, b)
    assert abs(np.linalg.norm(a) - 1) < 1e-12
    assert not np.array_equal(a, random_state(8, 3))
    with pytest.raises(ValueError):
        random_state(0, 0)


def test_random_state_haar_populations():
    n, count = 2, 10_000
    dim = 2 ** n
    pops = np.array([np.abs(random_state(s, n)) ** 2 for s in range(count)])
    sigma = math.sqrt((dim - 1) / (dim ** 2 * (dim + 1)) / count)
    assert np.all(np.abs(pops.mean(axis=0) - 1 / dim) < 3 * sigma)


def test_fidelity_basics():
    psi = random_state(1, 2)
    assert fidelity(psi, psi) == pytest.approx(1.0)
    assert fidelity(psi, np.exp(0.4j) * psi) == pytest.approx(1.0)
    perp = random_state(2, 2)
    perp = perp - np.vdot(psi, perp) * psi
    perp /= np.linalg.norm(perp)
    assert fidelity(psi, perp) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        fidelity(psi, random_state(1, 1))
    with pytest.raises(ValueError):
        fidelity(psi, 2 * psi)


def test_larmor_period():
    dw = 2 * math.pi * 1e3
    s = SpinSystem(np.array([dw]), np.zeros((1, 1)))
    psi0 = random_state(3, 1)
    traj = exact_evolve(s, PulseSequence((Free(2 * math.pi / dw),)), psi0=psi0, n_cycles=1)
    assert fidelity(traj.final, psi0) == pytest.approx(1.0, abs=1e-12)


def test_identity_cycle_keeps_state():
    s = SpinSystem(np.array([0.0]), np.zeros((1, 1)))
    psi0 = random_state(4, 1)
    traj = exact_evolve(s, build_whh4(1e-6), psi0=psi0, n_cycles=5)
    assert len(traj.times) == 6
    for st in traj.states:
        np.testing.assert_allclose(st, psi0, atol=1e-14)


def test_errors():
    s = SpinSystem(np.array([1.0, 2.0]), np.zeros((2, 2)))
    seq = build_whh4(1e-3)
    with pytest.raises(ValueError):
        exact_evolve(s, seq, psi0=random_state(0, 2), dt=0.0, n_cycles=1)
    with pytest.raises(ValueError):
        exact_evolve(s, seq, psi0=random_state(0, 3), n_cycles=1)
    with pytest.raises(ValueError):
        exact_evolve(s, seq, psi0=random_state(0, 2), dt=10.0, n_cycles=1)


def test_cycle_equals_toggling_frame_product():
    s = SpinSystem.from_pairs([300.0, -120.0], {(0, 1): 250.0})
    seq = build_mrev16(1e-4)
    psi0 = random_state(5, 2)
    h = to_dense(build_zeeman(s) + build_dipolar(s))
    u = np.eye(4, dtype=complex)
    for d, ht in toggled_intervals(seq, h, 2):
        u = expm(-1j * ht * d) @ u
    traj = exact_evolve(s, seq, psi0=psi0, n_cycles=3)
    np.testing.assert_allclose(traj.final, np.linalg.matrix_power(u, 3) @ psi0, atol=1e-10)


def test_mrev16_offsets_follow_average_for_short_tau():
    s = SpinSystem(np.array([1e3, -400.0]), np.zeros((2, 2)))
    psi0 = random_state(6, 2)
    for tau, tol in ((1e-6, 1e-6), (1e-7, 1e-8)):
        seq = build_mrev16(tau)
        n = 50
        final = exact_evolve(s, seq, psi0=psi0, n_cycles=n, stride=None).final
        ref = aht_evolve(average0(seq, build_zeeman(s)), OperatorSum.zero(2), n * seq.cycle_time, psi0)
        assert 1 - fidelity(final, ref) < tol


def _brute(system, seq, drives, dt, psi, n_cycles):
    """Midpoint stepping with the full Hamiltonian rebuilt at every step."""
    n = system.n
    h0 = sum(-w * spin_op(n, k, "Z") for k, w in enumerate(system.offsets))
    for k in range(n):
        for l in range(k + 1, n):
            d = system.couplings[k, l]
            h0 = h0 + d * (2 * spin_op(n, k, "Z") @ spin_op(n, l, "Z")
                           - spin_op(n, k, "X") @ spin_op(n, l, "X")
                           - spin_op(n, k, "Y") @ spin_op(n, l, "Y"))
    fx = sum(spin_op(n, k, "X") for k in range(n))
    fy = sum(spin_op(n, k, "Y") for k in range(n))
    t = 0.0
    cuts = sorted({d.start for d in drives} | {d.end for d in drives})
    for _ in range(n_cycles):
        for e in seq.events:
            if isinstance(e, Delta):
                r = e.rotation
                psi = rotation(n, r.site, r.axis, r.angle) @ psi
                continue
            pts = sorted({t, t + e.duration} | {c for c in cuts if t < c < t + e.duration})
            for a, b in zip(pts[:-1], pts[1:]):
                m = max(1, math.ceil((b - a) / dt - 1e-9))
                step = (b - a) / m
                for i in range(m):
                    tm = a + (i + 0.5) * step
                    h = h0.copy()
                    for d in drives:
                        if d.start <= tm < d.end:
                            ang = d.carrier_offset * (tm - d.start) - d.phase
                            h = h - d.amplitude * (math.cos(ang) * fx - math.sin(ang) * fy)
                    psi = expm(-1j * h * step) @ psi
            t += e.duration
    return psi


@pytest.mark.parametrize("drives", [
    [SelectiveDrive(0, 2e4, 3e4, 0.7, 0.0, 3.3e-5)],
    [SelectiveDrive(0, 2e4, 3e4, 0.7, 1.1e-5, 2.0e-5)],
    [SelectiveDrive(0, 2e4, 3e4, 0.7, 0.0, 2.0e-5), SelectiveDrive(1, 1e4, -1e4, 0.1, 1e-5, 3e-5)],
])
def test_exact_evolve_matches_brute_force(drives):
    s = SpinSystem.from_pairs([9e4, 0.0], {(0, 1): 2e4})
    seq = build_whh4(1e-6)
    psi0 = random_state(9, 2)
    dt = 2e-7
    got = exact_evolve(s, seq, drives, dt=dt, psi0=psi0, n_cycles=8, stride=None).final
    ref = _brute(s, seq, drives, dt, psi0, 8)
    np.testing.assert_allclose(got, ref, atol=1e-10)


def test_multiple_states_at_once():
    s = SpinSystem.from_pairs([9e4, 0.0], {(0, 1): 2e4})
    seq = build_mrev16(1e-6)
    d = SelectiveDrive(0, 1e3, 3e4, 0.7, 0.0, 2e-3)
    states = np.stack([random_state(k, 2) for k in range(3)], axis=1)
    both = exact_evolve(s, seq, [d], psi0=states, stride=None).final
    for k in range(3):
        one = exact_evolve(s, seq, [d], psi0=states[:, k], stride=None).final
        np.testing.assert_allclose(both[:, k], one, atol=1e-12)


def test_norm_preserved_over_long_run():
    s = SpinSystem.from_pairs([9e4, 0.0], {(0, 1): 2e4})
    seq = build_mrev16(1e-6)
    d = SelectiveDrive(0, 900.0, 3e4, 0.7, 0.0, 0.05)
    final = exact_evolve(s, seq, [d], psi0=random_state(1, 2), stride=None).final
    # about 2000 cycles of 10 steps each
    assert abs(np.linalg.norm(final) - 1) < 1e-10


def test_midpoint_second_order():
    s = SpinSystem.from_pairs([9e4, 0.0], {(0, 1): 2e4})
    seq = build_whh4(1e-6)
    d = [SelectiveDrive(0, 1e5, 3e4, 0.7, 0.0, 1e-3)]
    psi0 = random_state(2, 2)
    run = lambda dt: exact_evolve(s, seq, d, dt=dt, psi0=psi0, n_cycles=20, stride=None).final  # noqa: E731
    ref = run(1e-6 / 64)
    errs = [np.linalg.norm(run(dt) - ref) for dt in (1e-6 / 2, 1e-6 / 4, 1e-6 / 8)]
    for a, b in zip(errs[:-1], errs[1:]):
        assert 3.0 < a / b < 5.0


def test_samples_and_times():
    s = SpinSystem(np.array([100.0]), np.zeros((1, 1)))
    seq = build_whh4(1e-3)
    traj = exact_evolve(s, seq, psi0=random_state(0, 1), n_cycles=6, stride=2,
                        sample_times=[0.0085, 0.0205])
    assert np.all(np.diff(traj.times) > 0)
    np.testing.assert_allclose(traj.times, [0, 0.0085, 0.012, 0.0205, 0.024, 0.036])
    edge = exact_evolve(s, seq, psi0=random_state(0, 1), n_cycles=6, stride=None,
                        sample_times=[0.012])
    np.testing.assert_allclose(edge.times, [0, 0.012, 0.036])
    only = exact_evolve(s, seq, psi0=random_state(0, 1), n_cycles=6, stride=None)
    assert len(only.times) == 2
    np.testing.assert_allclose(only.final, traj.final, atol=1e-13)


def test_idealized_w_cycle_is_limit_of_explicit_train():
    s = SpinSystem.from_pairs([800.0, -500.0], {(0, 1): 30.0})
    T = 1e-3
    psi0 = random_state(12, 2)
    ideal = exact_evolve(s, build_w_cycle({0: "X"}, T), psi0=psi0, n_cycles=4, stride=None).final
    infid = []
    for spacing in (T / 5, T / 10, T / 20):
        seq = build_w_cycle({0: "X"}, T, spacing)
        final = exact_evolve(s, seq, psi0=psi0, n_cycles=4, stride=None).final
        infid.append(1 - fidelity(final, ideal))
    assert infid[0] > infid[1] > infid[2]
    assert infid[2] < 1e-2


def test_aht_evolve():
    psi0 = random_state(3, 2)
    hz = OperatorSum(2, {"ZE": -3.0, "EZ": 1.0})
    hs = OperatorSum(2, {"XE": -0.5, "YE": 0.2})
    np.testing.assert_array_equal(aht_evolve(hz, hs, 0.0, psi0), psi0)
    t = 0.8
    ref = expm(-1j * to_dense(hz) * t) @ expm(-1j * to_dense(hs) * t) @ psi0
    np.testing.assert_allclose(aht_evolve(hz, hs, t, psi0), ref, atol=1e-13)
    pure = aht_evolve(hz, OperatorSum.zero(2), t, psi0)
    np.testing.assert_allclose(pure, expm(-1j * to_dense(hz) * t) @ psi0, atol=1e-13)
    with pytest.raises(ValueError):
        aht_evolve(hz, OperatorSum.zero(3), t, psi0)


def test_mrev16_zeeman_third_rate():
    dw = 600.0
    s = SpinSystem(np.array([dw]), np.zeros((1, 1)))
    hz = average0(build_mrev16(1e-6), build_zeeman(s))
    psi0 = random_state(0, 1)
    t = 0.37
    np.testing.assert_allclose(aht_evolve(hz, OperatorSum.zero(1), t, psi0),
                               expm(1j * dw / 3 * PAULI["Z"] * t) @ psi0, atol=1e-13)


def test_reduced_state_tools():
    a, b = random_state(1, 1), random_state(2, 1)
    psi = np.kron(a, b)
    np.testing.assert_allclose(reduced_density(psi, (1,), 2), np.outer(b, b.conj()), atol=1e-14)
    assert state_infidelity(reduced_density(psi, (0,), 2), a) < 1e-15
    perp = np.array([-a[1].conj(), a[0].conj()])
    assert state_infidelity(np.outer(perp, perp.conj()), a) == pytest.approx(1.0)
