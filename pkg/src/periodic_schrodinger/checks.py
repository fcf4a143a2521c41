"""Verification suites: each compares a closed formula against an independent oracle.

Every suite returns a :class:`SuiteResult` whose ``details`` hold the
measured worst-case error next to the tolerance it was judged against.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .charpoly import (
    det_formula_batch,
    det_recurrence_batch,
    enumerate_matchings,
    h_p_eval,
    matching_counts,
    random_jacobi_batch,
)
from .dynamics import (
    BlockPropagator,
    LatticeState,
    block_kernel_p2_closed,
    evolve,
    unitarity_defect,
)
from .floquet import hermitian_bands, verify_localization
from .model import DEFAULT_RHO0, PeriodicPotential, alternating_potential, constants, h_p_bound, new_potential

DET_RTOL = 1e-10
DERIV_RTOL = 1e-6
DERIV_ATOL = 1e-8
SIN_CUTOFF = 1e-3
CLOSED_FORM_TOL = 1e-8
REALSPACE_TOL = 1e-6
UNITARITY_TOL = 1e-8
NORM_DRIFT_TOL = 1e-10


@dataclass
class SuiteResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}"

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "seconds": round(self.seconds, 3),
                "details": self.details}


def _timed(fn):
    def wrapper(*args, **kw):
        t0 = time.perf_counter()
        res = fn(*args, **kw)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def fibonacci(n: int) -> int:
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def default_potential(p: int) -> PeriodicPotential:
    """``(+1, -1)`` for ``p = 2`` and ``(0, 1, ..., p-1)`` otherwise."""
    return alternating_potential() if p == 2 else new_potential(range(p))


# -- determinants ----------------------------------------------------------------

@_timed
def determinant_suite(ps=range(2, 13), trials: int = 1000, seed: int = 0, *,
                      perturb: float = 0.0, rtol: float = DET_RTOL) -> SuiteResult:
    """Matching-sum determinant against the three-term recurrence on random complex specs."""
    rng = np.random.default_rng(seed)
    worst = {}
    for p in ps:
        a, b = random_jacobi_batch(rng, trials, p)
        ref = det_recurrence_batch(a, b)
        got = det_formula_batch(a, b, perturb=perturb)
        worst[p] = float(np.max(np.abs(got - ref) / np.abs(ref)))
    return SuiteResult("determinant formula vs recurrence", all(w <= rtol for w in worst.values()),
                       {"trials_per_p": trials, "seed": seed, "rtol": rtol, "worst_rel_err": worst,
                        "perturb": perturb})


def matching_table(p: int = 6) -> list[dict]:
    """One row per matching of the path on ``p`` vertices: size, edges, free vertices."""
    rows = []
    for k, group in enumerate_matchings(p).items():
        for m in group:
            covered = {v for j in m for v in (j, j + 1)}
            rows.append({
                "k": k,
                "matching": " ".join(f"{{{j},{j + 1}}}" for j in m) or "-",
                "free": " ".join(str(v) for v in range(1, p + 1) if v not in covered) or "-",
                "term": _term_string(m, covered, p),
            })
    return rows


def _term_string(m, covered, p):
    parts = [f"a{v}" for v in range(1, p + 1) if v not in covered] + [f"|b{j}|^2" for j in m]
    sign = "-" if len(m) % 2 else "+"
    return sign + " " + "*".join(parts) if parts else sign + " 1"


@_timed
def matching_suite(ps=range(2, 13)) -> SuiteResult:
    """Matching counts sum to the Fibonacci number ``F(p+1)``; ``p = 6`` splits as (1, 5, 6, 1)."""
    totals = {p: sum(matching_counts(p).values()) for p in ps}
    fib_ok = all(totals[p] == fibonacci(p + 1) for p in ps)
    six = [matching_counts(6)[k] for k in range(4)]
    return SuiteResult("matching counts", fib_ok and six == [1, 5, 6, 1],
                       {"totals": totals, "fibonacci": {p: fibonacci(p + 1) for p in ps}, "p6_by_size": six})


# -- band derivatives --------------------------------------------------------------

def _mp_fiber(values, lam, x):
    p = len(values)
    A = mpmath.zeros(p, p)
    for i, v in enumerate(values):
        A[i, i] = v
    for i in range(p - 1):
        A[i, i + 1] = lam
        A[i + 1, i] = lam
    e = mpmath.expj(x)
    A[0, p - 1] += lam * e
    A[p - 1, 0] += lam * mpmath.conj(e)
    return A


def mp_bands(pot: PeriodicPotential, lam, x, dps: int = 50) -> tuple[list, np.ndarray]:
    """Ascending band values at ``x`` from an extended-precision Hermitian eigensolve.

    Also returns the permutation that labels them by rank of ``V``.
    """
    with mpmath.workdps(dps):
        ev = mpmath.eigh(_mp_fiber(pot.values, mpmath.mpf(lam), mpmath.mpf(x)), eigvals_only=True)
        vals = sorted(ev)
    order = np.argsort(np.argsort(pot.array))
    return vals, order


def finite_difference_derivatives(pot: PeriodicPotential, lam: float, xs, h: float = 1e-4,
                                  dps: int = 50) -> np.ndarray:
    """Central differences of the bands, taken in extended precision.

    The bands move by ``O(lam^p)``, which for ``p >= 4`` is below double
    precision resolution of an ``O(1)`` eigenvalue; the difference must
    therefore be formed before rounding to float.
    """
    out = np.empty((len(xs), pot.p))
    with mpmath.workdps(dps):
        hh = mpmath.mpf(h)
        for k, x in enumerate(xs):
            xp = mpmath.mpf(float(x)) + hh
            xm = mpmath.mpf(float(x)) - hh
            up, order = mp_bands(pot, lam, xp, dps)
            dn, _ = mp_bands(pot, lam, xm, dps)
            diff = [float((u - d) / (2 * hh)) for u, d in zip(up, dn)]
            out[k] = np.asarray(diff)[order]
    return out


@_timed
def derivative_suite(ps=(3, 4, 5), M: int = 256, *, lam_fraction: float = 0.5, h: float = 1e-4,
                     rho0: float = DEFAULT_RHO0) -> SuiteResult:
    """Band-derivative formula against extended-precision central differences."""
    worst = {}
    ok = True
    for p in ps:
        pot = default_potential(p)
        lam = lam_fraction * constants(pot, rho0).lambda0
        bands = hermitian_bands(pot, lam, M, rho0=rho0)
        fd = finite_difference_derivatives(pot, lam, bands.x, h)
        big = np.abs(np.sin(bands.x)) > SIN_CUTOFF
        err = np.abs(bands.dzeta - fd)
        rel = float(np.max(err[big] / np.abs(fd[big])))
        absolute = float(np.max(err[~big])) if np.any(~big) else 0.0
        worst[p] = {"lam": lam, "max_rel": rel, "max_abs_near_sin0": absolute}
        ok &= rel <= DERIV_RTOL and absolute <= DERIV_ATOL
    return SuiteResult("band derivative vs finite differences", bool(ok),
                       {"M": M, "h": h, "rtol": DERIV_RTOL, "atol": DERIV_ATOL, "per_p": worst})


# -- localization and h_p ----------------------------------------------------------

@_timed
def localization_suite(ps=(2, 3, 4, 5), fractions=(1.0, 0.5, 0.1), n_samples: int = 64, *,
                       rho0: float = DEFAULT_RHO0) -> SuiteResult:
    """Annulus eigenvalues stay in their disks around ``V_l``."""
    per = {}
    ok = True
    for p in ps:
        pot = default_potential(p)
        lam0 = constants(pot, rho0).lambda0
        for f in fractions:
            rep = verify_localization(pot, f * lam0, n_samples, rho0=rho0)
            per[f"p={p},lam={f:g}*lambda0"] = rep.as_dict()
            ok &= rep.passed
    return SuiteResult("eigenvalue localization", bool(ok), {"rho0": rho0, "n_samples": n_samples, "cases": per})


def domain_sample(pot: PeriodicPotential, n: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """``n`` couplings in ``[0, 1]`` and ``n`` points in the union of disks ``|zeta - V_j| <= gamma/2``.

    Half of the points sit on the disk boundaries, where the bound is tightest.
    """
    lams = np.linspace(0.0, 1.0, n)
    k = np.arange(n)
    centers = pot.array[k % pot.p]
    radius = np.where(k % 2 == 0, 1.0, np.sqrt((k + 1) / (n + 1))) * pot.gamma / 2
    theta = k * math.pi * (3 - math.sqrt(5))
    return lams, centers + radius * np.exp(1j * theta)


@_timed
def hp_bound_suite(ps=(3, 4, 5, 6), n: int = 32) -> SuiteResult:
    """``|h_p| <= 2^p (Gamma + gamma/2)^p + (Gamma + gamma/2 + 2)^(p-2)`` on a sample of the domain."""
    per = {}
    ok = True
    for p in ps:
        pot = default_potential(p)
        bound = h_p_bound(p, pot.gamma, pot.Gamma)
        lams, zetas = domain_sample(pot, n)
        vals = np.array([[abs(h_p_eval(pot, lam, zeta)) for zeta in zetas] for lam in lams])
        fails = int(np.sum(vals > bound))
        per[p] = {"bound": bound, "max_abs_hp": float(vals.max()), "ratio": float(vals.max() / bound),
                  "failures": fails}
        ok &= fails == 0
    return SuiteResult("h_p bound", bool(ok), {"grid": f"{n}x{n}", "per_p": per})


# -- dynamics ---------------------------------------------------------------------

@_timed
def closed_form_suite(mus=(1.0, 3.0, 10.0), ts=(1.0, 5.0, 20.0), d_max: int = 30, M: int = 512) -> SuiteResult:
    """Two-band closed-form kernel against trapezoid quadrature."""
    pot = alternating_potential()
    ds = np.arange(-d_max, d_max + 1)
    worst = 0.0
    for mu in mus:
        prop = BlockPropagator(pot, mu, M)
        for t in ts:
            quad = prop.kernels(t, ds)
            for i, d in enumerate(ds):
                closed = block_kernel_p2_closed(mu, t, int(d)).matrix
                worst = max(worst, float(np.max(np.abs(closed - quad[i]))))
    return SuiteResult("p=2 closed form vs quadrature", worst <= CLOSED_FORM_TOL,
                       {"max_entry_diff": worst, "tol": CLOSED_FORM_TOL, "M": M})


@_timed
def realspace_suite(values=(0.0, 1.0, 2.0), mu: float = 5.0, ts=(1.0, 2.5, 5.0, 10.0), d_max: int = 20,
                    N: int = 1000, M: int = 512) -> SuiteResult:
    """Block kernels from the Floquet side against truncated real-space evolution of ``delta_0``."""
    pot = new_potential(values)
    prop = BlockPropagator(pot, mu, M)
    psi0 = LatticeState.delta(N)
    ds = np.arange(-d_max, d_max + 1)
    worst = drift = 0.0
    for t in ts:
        state = evolve(pot, mu, psi0, t)
        drift = max(drift, abs(state.norm - 1.0))
        ks = prop.kernels(t, ds)
        for i, d in enumerate(ds):
            col = np.array([state.amplitude(pot.p * int(d) + m) for m in range(pot.p)])
            worst = max(worst, float(np.max(np.abs(col - ks[i][:, 0]))))
    return SuiteResult("Floquet kernel vs real-space evolution", worst <= REALSPACE_TOL and drift <= NORM_DRIFT_TOL,
                       {"max_diff": worst, "tol": REALSPACE_TOL, "norm_drift": drift, "sites": 2 * N + 1})


@_timed
def unitarity_suite(cases=None, *, rho0: float = DEFAULT_RHO0) -> SuiteResult:
    """``sum_d K K^* = I`` on the block side and norm conservation on the real-space side."""
    if cases is None:
        cases = [((1.0, -1.0), 10.0, 20.0), ((0.0, 1.0, 2.0), 5.0, 10.0), ((0.0, 1.0, 2.0, 3.0), 3.0, 10.0)]
    rows = []
    ok = True
    for values, mu, t in cases:
        pot = new_potential(values)
        defect = unitarity_defect(pot, mu, t, d_max=200, M=1024)
        state = evolve(pot, mu, LatticeState.delta(300), t)
        drift = abs(state.norm - 1.0)
        rows.append({"V": list(values), "mu": mu, "t": t, "row_sum_defect": defect, "norm_drift": drift})
        ok &= defect <= UNITARITY_TOL and drift <= NORM_DRIFT_TOL
    return SuiteResult("unitarity", bool(ok), {"tol_defect": UNITARITY_TOL, "tol_drift": NORM_DRIFT_TOL,
                                               "cases": rows})


def run_all(*, p: int | None = None, trials: int = 1000, seed: int = 0, perturb: float = 0.0) -> list[SuiteResult]:
    """The suites behind ``verify``; ``p`` narrows the determinant and matching checks to one size."""
    ps = range(2, 13) if p is None else [p]
    return [
        determinant_suite(ps, trials, seed, perturb=perturb),
        matching_suite(ps if p is None else sorted({p, 6})),
        derivative_suite(),
        localization_suite(),
        hp_bound_suite(),
        closed_form_suite(),
        realspace_suite(),
        unitarity_suite(),
    ]
