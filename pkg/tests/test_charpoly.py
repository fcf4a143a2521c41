import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from periodic_schrodinger import constants, new_potential
from periodic_schrodinger.charpoly import (JacobiSpec, charpoly_coeffs, charpoly_eval, charpoly_split,
                                          det_bruteforce, det_formula, det_formula_batch, det_recurrence_batch,
                                          enumerate_matchings, h_p_eval, matching_counts, random_jacobi_batch,
                                          unperturbed)
from periodic_schrodinger.checks import fibonacci
from periodic_schrodinger.errors import DomainViolation, LengthMismatch, ZeroCornerParameter
from periodic_schrodinger.floquet import floquet_stack
from periodic_schrodinger.roots import aberth_roots, backward_error


def test_small_determinants():
    a, b = np.array([2 + 1j, 3 - 2j]), np.array([1 + 2j])
    assert det_formula(JacobiSpec(a, b)) == pytest.approx(a[0] * a[1] - abs(b[0]) ** 2)
    a3, b3 = np.array([1.0, 2.0, 3.0]), np.array([0.5j, 2.0])
    ref = a3[0] * a3[1] * a3[2] - a3[2] * abs(b3[0]) ** 2 - a3[0] * abs(b3[1]) ** 2
    assert det_formula(JacobiSpec(a3, b3)) == pytest.approx(ref)
    assert det_formula(JacobiSpec(a3, np.zeros(2))) == pytest.approx(6.0)


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        JacobiSpec(np.ones(3), np.ones(3))


def test_matching_counts(oracles):
    assert matching_counts(3) == {0: 1, 1: 2}
    assert list(matching_counts(6).values()) == oracles["matching_counts_p6"]
    for p in range(2, 13):
        assert sum(matching_counts(p).values()) == fibonacci(p + 1)
        assert sum(len(v) for v in enumerate_matchings(p).values()) == fibonacci(p + 1)


@pytest.mark.parametrize("p", range(2, 11))
def test_recurrence_agrees_with_cofactor(p):
    rng = np.random.default_rng(p)
    a, b = random_jacobi_batch(rng, 5, p)
    for i in range(5):
        spec = JacobiSpec(a[i], b[i])
        rec, cof = det_bruteforce(spec), det_bruteforce(spec, "cofactor")
        assert abs(rec - cof) <= 1e-12 * abs(cof)
        assert abs(det_formula(spec) - rec) <= 1e-10 * abs(rec)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_formula_equals_recurrence_property(p, seed):
    a, b = random_jacobi_batch(np.random.default_rng(seed), 20, p)
    f, r = det_formula_batch(a, b), det_recurrence_batch(a, b)
    assert np.max(np.abs(f - r) / np.abs(r)) <= 1e-10


def test_p2_charpoly(p2):
    lam, z, zeta = 0.3, 1.4 * np.exp(0.5j), 0.2 + 0.7j
    ref = zeta**2 - 1 - lam**2 * (2 + z + 1 / z)
    assert charpoly_eval(p2, lam, z, zeta) == pytest.approx(ref, rel=1e-13)
    np.testing.assert_allclose(np.polyval(charpoly_coeffs(p2, lam, z), zeta), ref, rtol=1e-13)


@pytest.mark.parametrize("values", [[0, 1, 2], [0, 1, 2, 3], [0.3, -1, 2, 0.9, 5], [0, 1, 2, 3, 4, 5, 6]])
def test_charpoly_matches_numpy_determinant(values):
    pot = new_potential(values)
    rng = np.random.default_rng(7)
    lam = 0.2
    for _ in range(20):
        z = (0.5 + rng.random()) * np.exp(2j * np.pi * rng.random())
        zeta = complex(*rng.normal(size=2))
        A = floquet_stack(pot, lam, z=z, scaled=True)[0]
        ref = np.linalg.det(zeta * np.eye(pot.p) - A)
        assert abs(charpoly_eval(pot, lam, z, zeta) - ref) <= 1e-10 * abs(ref)
        assert abs(np.polyval(charpoly_coeffs(pot, lam, z), zeta) - ref) <= 1e-10 * max(abs(ref), 1)


def test_zero_z_rejected(p3):
    with pytest.raises(ZeroCornerParameter):
        charpoly_eval(p3, 0.1, 0, 0.5)


@settings(max_examples=40)
@given(st.floats(0.9, 1.1), st.floats(0, 2 * np.pi), st.floats(-0.2, 0.2), st.floats(-0.2, 0.2))
def test_split_is_exact(r, th, dre, dim):
    pot = new_potential([0.0, 1.0, 2.0, 3.0])
    lam = constants(pot).lambda0
    zeta = 1.0 + dre + 1j * dim
    s = charpoly_split(pot, lam, r * np.exp(1j * th), zeta)
    assert s.split_residual <= 1e-12 * max(1.0, abs(s.F))
    assert s.f == pytest.approx(unperturbed(pot, zeta))


def test_h_p_domain(p3):
    led = constants(p3)
    assert np.isfinite(h_p_eval(p3, led.lambda0, 1.0 + 0.1j))
    with pytest.raises(DomainViolation):
        h_p_eval(p3, led.lambda0, 10.0)


def test_aberth_roots():
    coeffs = np.poly([1.0, 2.0 + 1j, -3.0])
    roots = aberth_roots(coeffs, np.array([0.9, 2.1 + 0.9j, -2.8]))
    np.testing.assert_allclose(roots, [1.0, 2.0 + 1j, -3.0], atol=1e-12)
    assert backward_error(coeffs, roots).max() < 1e-13
