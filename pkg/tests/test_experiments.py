import math

import numpy as np
import pytest

from recouple.algebra import OperatorSum
from recouple.experiments import (RECOUPLED_FACTOR, ScanResult, chain_couplings, dt_convergence,
                                  fidelity_scan, predicted_selectivity, recoupling_check,
                                  recoupling_table, scan_point, ScanPoint, selectivity_error,
                                  symmetry_order_check)
from recouple.model import SpinSystem, build_dipolar
from recouple.sequence import PulseSequence, Free, build_super_whh, build_whh4, pulse, SYMMETRIZED


def rabi_leak(ratio):
    """Population leaving |up> after a resonant-duration pi pulse detuned by ratio*w."""
    g = math.sqrt(1 + ratio ** 2)
    return math.sin(math.pi * g / 2) ** 2 / g ** 2


def test_scan_small_grid_deterministic():
    kw = dict(tau_d=[1e-4, 1e-2], tau_dw=[1e-1, 3e-1], seeds=2)
    a, b = fidelity_scan(**kw), fidelity_scan(**kw)
    assert a.values.shape == (2, 2)
    assert np.array_equal(a.values, b.values)
    assert a.metadata == b.metadata
    assert a.metadata["phase_rad"] == 0.7 and a.metadata["seeds"] == [0, 1]


def test_scan_pool_matches_serial():
    kw = dict(tau_d=[1e-3, 3e-2], tau_dw=[2e-1, 5e-1], seeds=1)
    assert np.array_equal(fidelity_scan(**kw).values, fidelity_scan(workers=2, **kw).values)


def test_scan_errors():
    with pytest.raises(ValueError):
        fidelity_scan(tau_d=[], tau_dw=[0.1])
    with pytest.raises(ValueError):
        fidelity_scan(tau_d=[1e-3], tau_dw=[0.1], seeds=0)
    with pytest.raises(ValueError):
        ScanResult("x", np.zeros(2), "y", np.zeros(3), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        ScanResult("x", np.zeros(1), "y", np.zeros(1), np.array([[np.nan]]))


def test_scan_limits_and_order():
    corner = scan_point(ScanPoint(1e-4, 1e-3, 1e-6, 0.7, 0.01, (0, 1, 2), 0.125))[0]
    assert corner > 1 - 1e-3
    # ordering in tau_D holds while averaging is valid; at tau*dw ~ 0.1 it does not
    strong = scan_point(ScanPoint(1e-2, 1e-2, 1e-6, 0.7, 0.01, (0, 1, 2), 0.125))[0]
    weak = scan_point(ScanPoint(1e-3, 1e-2, 1e-6, 0.7, 0.01, (0, 1, 2), 0.125))[0]
    assert strong <= weak


def test_selective_pi_point_and_convergence():
    fid = scan_point(ScanPoint(1e-3, 1e-2, 1e-6, 0.7, 0.01, (0, 1, 2), 0.125))[0]
    assert fid > 0.99
    assert dt_convergence(1e-3, 1e-2) < 1e-6


@pytest.mark.parametrize("k, l", [(0, 1), (1, 2), (0, 2)])
def test_recoupling_symbolic(k, l):
    rep = recoupling_check(3, k, l, 1e-3, simulate=False)
    assert rep.exact
    assert rep.ratio == pytest.approx(RECOUPLED_FACTOR, abs=1e-15)
    for pair, dev in rep.deviation_norms.items():
        assert dev == 0
        if set(pair) != {k, l}:
            assert rep.pair_effective[pair].is_zero()


def test_recoupling_four_spins_plain():
    rep = recoupling_check(4, 1, 3, 1.0, mode="PLAIN", simulate=False)
    assert rep.exact and rep.ratio == pytest.approx(8 / 9)


def test_recoupling_errors():
    with pytest.raises(IndexError):
        recoupling_check(3, 0, 3, 1e-3)
    with pytest.raises(IndexError):
        recoupling_check(3, 1, 1, 1e-3)
    with pytest.raises(ValueError):
        recoupling_check(1, 0, 0, 1e-3)


def test_recoupled_dynamics_and_spectator_scaling():
    d = 1.0
    system = chain_couplings(3, d)
    reps = [recoupling_check(3, 0, 1, 1 / (36 * n * d), system=system) for n in (28, 56)]
    assert reps[0].fidelity > 0.99
    ratio = reps[0].spectator_angle / reps[1].spectator_angle
    assert 3 <= ratio <= 5


def test_recoupling_table_complete():
    table = recoupling_table()
    assert len(table) == 16 and all(v["matches"] for v in table.values())


def test_predicted_selectivity():
    assert predicted_selectivity(0.0, 1.0) == 1.0
    assert predicted_selectivity(1e6, 1.0) < 1e-5
    with pytest.raises(ValueError):
        predicted_selectivity(1.0, 0.0)


@pytest.mark.parametrize("ratio", [0.5, 3.0, 10.0, 31.0])
def test_selectivity_simulation_matches_rabi(ratio):
    _, sim = selectivity_error(ratio * 2.0, 2.0)
    assert sim == pytest.approx(rabi_leak(ratio), rel=1e-6, abs=1e-12)


def test_symmetry_reports():
    h = build_dipolar(SpinSystem.from_pairs([0.0, 1.0, 2.0], {(0, 1): 1.0, (1, 2): 1.0, (0, 2): 0.125}))
    sym = build_super_whh(0, 1, 1e-3, SYMMETRIZED).sequence
    spectators = build_dipolar(SpinSystem.from_pairs([0.0, 1.0, 2.0], {(1, 2): 1.0, (0, 2): 0.125}))
    rep = symmetry_order_check(sym, spectators)
    assert rep.h0_vanishes and rep.h1_vanishes
    assert not symmetry_order_check(sym, h).h0_vanishes
    whh = symmetry_order_check(build_whh4(1e-6), OperatorSum(2, {"ZZ": 2.0, "XX": -1.0, "YY": -1.0}))
    assert whh.h0_norm == 0 and whh.h1_vanishes
    asym = PulseSequence((Free(1.0), pulse("-y"), Free(1.0), pulse("y")))
    h2 = OperatorSum(2, {"ZZ": 2.0, "XX": -1.0, "YY": -1.0, "ZE": 0.5})
    assert not symmetry_order_check(asym, h2).h1_vanishes
    with pytest.raises(ValueError):
        symmetry_order_check(PulseSequence((Free(1.0), pulse("x"))), h2)
