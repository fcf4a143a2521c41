import math

import numpy as np
import pytest

from periodic_schrodinger import constants, new_potential
from periodic_schrodinger.errors import CouplingBelowThreshold, InsufficientSamples, ThresholdNeverCrossed
from periodic_schrodinger.velocity import (check_velocity_ordering, cone_profile, default_cone_times, direct_scaling,
                                           fit_front_velocity, flag_variant, loglog_slope, scaling_sweep,
                                           tail_decay, transient_samples, v_asy_direct, v_asy_exact, v_asy_upper,
                                           velocity_report)


def test_front_fit_synthetic():
    t = np.linspace(0, 10, 21)
    fit = fit_front_velocity(t=t, d_front=3 * t + 2, skip=0)
    assert fit.v_front == pytest.approx(3.0, abs=1e-12)
    assert fit.intercept == pytest.approx(2.0, abs=1e-12)
    assert fit.stderr < 1e-12 and fit.n_used == 21
    with pytest.raises(InsufficientSamples):
        fit_front_velocity(t=t[:4], d_front=t[:4])


def test_transient_rule():
    assert transient_samples(1.0) == 5
    assert transient_samples(0.001) == 100


def test_exact_velocity_matches_frozen(oracles):
    for case in oracles["velocities"]:
        pot = new_potential(case["V"])
        a, b = v_asy_exact(pot, case["mu"], check_threshold=False)
        assert a == pytest.approx(case["exact_A"], rel=1e-9)
        assert b == pytest.approx(case["exact_B"], rel=1e-9)
        assert a >= b


def test_direct_velocity_matches_frozen(oracles):
    for case in oracles["velocities"]:
        pot = new_potential(case["V"])
        dv = v_asy_direct(pot, case["mu"], T=case["T"])
        assert dv.value == pytest.approx(case["direct_block"], rel=1e-9)
        assert dv.value_site == pytest.approx(case["direct_site"], rel=1e-9)
        assert dv.value_site == pytest.approx(pot.p * dv.value, rel=0.02)


def test_flagged_variant_p2(oracles):
    case = oracles["velocities"][0]
    flag = flag_variant(case["exact_A"], case["exact_B"], case["direct_block"], case["direct_site"])
    assert flag == "A:site"
    assert abs(case["exact_A"] - case["direct_site"]) <= 0.1 * case["direct_site"]
    assert flag_variant(1.0, 0.5, 10.0, 20.0) == "none"


def test_threshold_gate(p2):
    with pytest.raises(CouplingBelowThreshold):
        v_asy_exact(p2, 1.0)
    with pytest.raises(CouplingBelowThreshold):
        velocity_report(p2, 1.0)


def test_upper_bound_p2(p2):
    mu = 10.0
    up = v_asy_upper(p2, mu)
    assert up["v_asy_bound"] == pytest.approx(8 * math.pi / mu * 2, rel=1e-12)  # C3 = 16 pi
    assert up["v_asy_upper"] <= 8 * math.pi / mu
    assert up["gap_bound_holds"] and up["upper_le_bound"]


def test_chain_p3_at_twice_threshold(p3):
    mu = 2 * constants(p3).mu0
    a, b = v_asy_exact(p3, mu)
    up = v_asy_upper(p3, mu)
    assert b <= a <= up["v_asy_upper"] <= up["v_asy_bound"]


def test_direct_zero_without_dispersion(monkeypatch, p2):
    import periodic_schrodinger.velocity as vel

    monkeypatch.setattr(vel, "max_group_velocity", lambda pot, mu: 0.0)
    assert v_asy_direct(p2, 10.0).value == 0.0


def test_cone_profile_and_front(p2):
    mu = constants(p2).mu0
    ts, d_max = default_cone_times(p2, mu)
    prof = cone_profile(p2, mu, ts, d_max)
    fit = fit_front_velocity(prof)
    assert 0 < fit.v_front <= prof.v_lr_bound
    assert prof.eta_fit > 0
    assert np.all(np.diff(prof.d_front) >= 0)
    tail = tail_decay(prof, 2 * fit.v_front)
    assert tail["rate"] > 0


def test_threshold_never_crossed(p2):
    from periodic_schrodinger.dynamics import BlockPropagator

    class Quiet(BlockPropagator):
        def norms(self, t, ds):
            return np.zeros(len(ds))

    with pytest.raises(ThresholdNeverCrossed):
        cone_profile(p2, 10.0, [0.0, 1.0], 5, propagator=Quiet(p2, 10.0, 64))


def test_velocity_ordering(p2):
    rep = velocity_report(p2, 20.0, cone=False, direct=True)
    res = check_velocity_ordering(rep)
    assert res["passed"] and res["direct_margin"] > 0 and res["exact_margin"] > 0
    assert rep.flagged_variant == "A:site"


def test_loglog_slope():
    mu = np.array([1.0, 2.0, 4.0, 8.0])
    assert loglog_slope(mu, 3 * mu**-2) == pytest.approx(-2.0)


def test_sweep_requires_decade(p2):
    with pytest.raises(ValueError):
        scaling_sweep(p2, [10, 11, 12, 13])


def test_sweep_p2_slope(p2):
    mu0 = constants(p2).mu0
    res = scaling_sweep(p2, mu0 * np.logspace(0, 1, 5))
    assert abs(res.slope_exact + 1) <= 0.1
    assert res.monotone and all(r.chain_ok for r in res.reports)


def test_sweep_parallel_matches_serial(p3):
    mu0 = constants(p3).mu0
    mus = mu0 * np.logspace(0, 1, 4)
    a = scaling_sweep(p3, mus)
    b = scaling_sweep(p3, mus, workers=2)
    assert [r.as_dict() for r in a.reports] == [r.as_dict() for r in b.reports]


def test_direct_scaling_below_threshold(p2):
    slope, runs = direct_scaling(p2, [5.0, 10.0, 20.0])
    assert abs(slope + 1) <= 0.15
    assert all(r.drift < 0.02 for r in runs)
