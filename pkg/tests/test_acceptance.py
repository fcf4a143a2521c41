"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured value,
the tolerance and the runtime; the lines are repeated in the pytest
terminal summary.  Run on its own with::

    pytest tests/test_acceptance.py -v
"""

import time

import numpy as np
import pytest

from periodic_schrodinger import constants, new_potential
from periodic_schrodinger.charpoly import matching_counts
from periodic_schrodinger.checks import (closed_form_suite, default_potential, derivative_suite, determinant_suite,
                                         fibonacci, hp_bound_suite, localization_suite, realspace_suite,
                                         unitarity_suite)
from periodic_schrodinger.dynamics import LatticeState, evolve, unitarity_defect
from periodic_schrodinger.velocity import (cone_profile, default_cone_times, direct_scaling, fit_front_velocity,
                                           scaling_sweep, tail_decay)

LINES = []


def record(n, title, passed, detail, seconds, limit=None):
    within = limit is None or seconds < limit
    ok = bool(passed and within)
    budget = f" (limit {limit:g} s)" if limit is not None else ""
    line = f"{'PASS' if ok else 'FAIL'}  criterion {n:>2}: {title}: {detail}; {seconds:.1f} s{budget}"
    LINES.append(line)
    print(line)
    assert ok, line


def decade(mu0, points=5):
    return mu0 * np.logspace(0, 1, points)


@pytest.fixture(scope="module")
def sweeps():
    """Band-formula sweeps over one decade from the threshold, p = 2, 3, 4, with direct runs where feasible."""
    out, seconds = {}, {}
    for p in (2, 3, 4):
        pot = default_potential(p)
        t0 = time.perf_counter()
        out[p] = scaling_sweep(pot, decade(constants(pot).mu0))
        seconds[p] = time.perf_counter() - t0
    return out, seconds


def test_criterion_01_determinant_formula():
    t0 = time.perf_counter()
    det = determinant_suite(range(2, 13), 1000, seed=0)
    counts_ok = all(sum(matching_counts(p).values()) == fibonacci(p + 1) for p in range(2, 13))
    six = [matching_counts(6)[k] for k in range(4)]
    worst = max(det.details["worst_rel_err"].values())
    record(1, "determinant formula, p=2..12, 1000 specs each", det.passed and counts_ok and six == [1, 5, 6, 1],
           f"max rel err {worst:.2e} <= 1e-10, Fibonacci counts {counts_ok}, p=6 {tuple(six)}",
           time.perf_counter() - t0, 5)


def test_criterion_02_closed_form():
    res = closed_form_suite((1.0, 3.0, 10.0), (1.0, 5.0, 20.0), 30, 512)
    record(2, "p=2 closed form vs quadrature", res.passed,
           f"max entry diff {res.details['max_entry_diff']:.2e} <= 1e-8", res.seconds, 30)


def test_criterion_03_realspace():
    res = realspace_suite((0.0, 1.0, 2.0), 5.0, (1.0, 2.5, 5.0, 7.5, 10.0), 20, N=1000)
    record(3, "Floquet kernel vs real-space, p=3, mu=5, N=2001", res.passed,
           f"max diff {res.details['max_diff']:.2e} <= 1e-6", res.seconds, 120)


def test_criterion_04_localization():
    res = localization_suite((2, 3, 4, 5), (1.0, 0.5, 0.1), 64)
    fails = sum(c["failures"] for c in res.details["cases"].values())
    worst = max(c["worst_ratio"] for c in res.details["cases"].values())
    record(4, "eigenvalue localization, p=2..5", res.passed and fails == 0,
           f"{fails} failures, worst |zeta-V|/gamma0 = {worst:.3f}", res.seconds)


def test_criterion_05_band_derivative():
    res = derivative_suite((3, 4, 5), 256, lam_fraction=0.5)
    rel = max(v["max_rel"] for v in res.details["per_p"].values())
    ab = max(v["max_abs_near_sin0"] for v in res.details["per_p"].values())
    record(5, "band derivative vs finite differences, p=3,4,5", res.passed,
           f"max rel {rel:.2e} <= 1e-6, max abs near sin x = 0 {ab:.2e} <= 1e-8", res.seconds)


def test_criterion_06_hp_bound():
    res = hp_bound_suite((3, 4, 5, 6), 32)
    fails = sum(v["failures"] for v in res.details["per_p"].values())
    ratio = max(v["ratio"] for v in res.details["per_p"].values())
    record(6, "h_p bound on 32x32 samples, p=3..6", res.passed and fails == 0,
           f"{fails} failures, worst |h_p|/bound = {ratio:.3f}", res.seconds)


def test_criterion_07_velocity_chain(sweeps):
    out, seconds = sweeps
    bad = [(p, r.mu) for p, s in out.items() for r in s.reports
           if not (r.v_asy_exact_A <= r.v_asy_upper <= r.v_asy_bound and r.v_asy_exact_B <= r.v_asy_upper)]
    n = sum(len(s.reports) for s in out.values())
    record(7, "v_exact <= v_upper <= C3/mu^(p-1), p=2,3,4", not bad,
           f"{len(bad)} failures over {n} sweep points", sum(seconds.values()))


def test_criterion_08a_scaling_band_formula(sweeps):
    out, seconds = sweeps
    slopes = {p: s.slope_exact for p, s in out.items()}
    ok = all(abs(slopes[p] + (p - 1)) <= 0.1 for p in slopes)
    detail = ", ".join(f"p={p}: {s:.4f} (target {-(p - 1)})" for p, s in slopes.items())
    record(8, "log-log slope of v_exact over one decade from mu0", ok, detail + ", tol 0.1",
           sum(seconds.values()), 60)


def test_criterion_08b_scaling_direct():
    t0 = time.perf_counter()
    s2, _ = direct_scaling(default_potential(2), [5.0, 10.0, 20.0])
    s3, _ = direct_scaling(default_potential(3), [10.0, 20.0, 40.0])
    ok = abs(s2 + 1) <= 0.15 and abs(s3 + 2) <= 0.2
    record(8, "direct-evolution slopes", ok,
           f"p=2: {s2:.4f} (target -1, tol 0.15), p=3: {s3:.4f} (target -2, tol 0.2)",
           time.perf_counter() - t0, 900)


def test_criterion_09_light_cone():
    t0 = time.perf_counter()
    rows, ok = [], True
    for p in (2, 3):
        pot = default_potential(p)
        mu0 = constants(pot).mu0
        for k in (1, 2, 4):
            mu = k * mu0
            ts, d_max = default_cone_times(pot, mu)
            prof = cone_profile(pot, mu, ts, d_max)
            fit = fit_front_velocity(prof)
            rate = tail_decay(prof, 2 * fit.v_front)["rate"]
            good = fit.v_front <= prof.v_lr_bound and prof.eta_fit > 0 and rate > 0
            ok &= bool(good)
            rows.append(f"p={p} mu={k}mu0: v_front/(C2/mu)={fit.v_front / prof.v_lr_bound:.2e} "
                        f"eta={prof.eta_fit:.3g} tail rate={rate:.3g}")
    record(9, "light-cone envelope", ok, "; ".join(rows), time.perf_counter() - t0)


def test_criterion_10_direct_below_light_cone():
    t0 = time.perf_counter()
    margins, ok = [], True
    for p, mus in ((2, [5.0, 10.0, 20.0]), (3, [10.0, 20.0, 40.0])):
        pot = default_potential(p)
        led = constants(pot)
        _, runs = direct_scaling(pot, mus)
        for mu, r in zip(mus, runs):
            margin = led.v_lr(mu) - r.value
            ok &= margin > 0
            margins.append(f"p={p} mu={mu:g}: margin {margin:.4g}")
    for p in (2, 3):
        pot = default_potential(p)
        mu0 = constants(pot).mu0
        s = scaling_sweep(pot, decade(mu0, 4), direct=True)
        for chk in s.velocity_ordering:
            ok &= chk["passed"] and "direct_ok" in chk
            margins.append(f"p={p} mu={chk['mu']:.4g}: margin {chk['direct_margin']:.4g}")
    record(10, "v_direct <= C2/mu", ok, "; ".join(margins), time.perf_counter() - t0)


def test_criterion_11_unitarity():
    t0 = time.perf_counter()
    suite = unitarity_suite()
    defects = [c["row_sum_defect"] for c in suite.details["cases"]]
    drifts = [c["norm_drift"] for c in suite.details["cases"]]
    extra = [((0.0, 1.0, 2.0), 5.0, 10.0), ((1.0, -1.0), 3.0, 20.0), ((0.0, 1.0, 2.0, 3.0), 30.0, 200.0)]
    for values, mu, t in extra:
        pot = new_potential(values)
        defects.append(unitarity_defect(pot, mu, t, 200, M=1024))
        drifts.append(abs(evolve(pot, mu, LatticeState.delta(400), t).norm - 1))
    ok = max(defects) <= 1e-8 and max(drifts) <= 1e-10
    record(11, "unitarity", ok, f"max row-sum defect {max(defects):.2e} <= 1e-8, "
                                f"max norm drift {max(drifts):.2e} <= 1e-10", time.perf_counter() - t0)
