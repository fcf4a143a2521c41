"""Light-cone fronts, asymptotic velocities and mu-scaling sweeps.

Velocities are in blocks per unit time unless a name ends in ``_site``
(sites per unit time, ``p`` times larger).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import (
    EIG_MAX_SITES,
    BlockPropagator,
    EigenPropagator,
    LatticeState,
    TruncatedHamiltonian,
    auto_sites,
    check_spill,
    evolve_chebyshev,
    max_group_velocity,
)
from .errors import (
    BoundarySpill,
    CouplingBelowThreshold,
    InsufficientSamples,
    MethodUnavailable,
    NotConverged,
    ThresholdNeverCrossed,
)
from .floquet import DEFAULT_NODES, hermitian_bands
from .model import DEFAULT_RHO0, PeriodicPotential, constants

DEFAULT_EPS = 1e-6
DRIFT_TOL = 0.02
FLAG_RTOL = 0.10
MIN_FIT_SAMPLES = 5
# largest tolerated phase roundoff t * max|E| * eps_machine
PHASE_BUDGET = 1e-3


def phase_roundoff(t_max: float, energy_scale: float) -> float:
    """Worst absolute phase error of ``exp(-i t E)`` in double precision."""
    return abs(t_max) * energy_scale * float(np.finfo(float).eps)


def _quadrature_floor(prop: BlockPropagator, t: float, row: np.ndarray) -> float:
    # roundoff in the phases t*E grows linearly with t; the a-priori estimate
    # is pessimistic, so the far-tail median is used when it is lower
    a_priori = 1e-13 + 1e-15 * abs(t) * prop.phase_scale
    tail = row[-max(row.size // 4, 1):]
    return min(a_priori, max(float(np.median(tail)), 1e-16))


@dataclass(frozen=True)
class ConeProfile:
    """Kernel norms ``norms[i, d] = max(||K(t_i, d)||, ||K(t_i, -d)||)`` for ``d = 0..d_max``."""

    mu: float
    t: np.ndarray
    d: np.ndarray
    norms: np.ndarray
    eps: float
    d_front: np.ndarray
    eta_fit: float
    v_lr_bound: float
    floors: np.ndarray = field(repr=False)


def _front(norms_row: np.ndarray, eps: float) -> int:
    above = np.nonzero(norms_row >= eps)[0]
    return int(above.max()) if above.size else -1


def _decay_rate(d: np.ndarray, row: np.ndarray, start: int, floor: float, eps: float) -> float | None:
    sel = (d > start) & (row > 10 * floor) & (row < eps)
    if sel.sum() < 3:
        return None
    slope = np.polyfit(d[sel], np.log(row[sel]), 1)[0]
    return float(-slope)


def cone_profile(pot: PeriodicPotential, mu: float, ts, d_max: int, eps: float = DEFAULT_EPS, *,
                 M: int | None = None, rho0: float = DEFAULT_RHO0,
                 propagator: BlockPropagator | None = None) -> ConeProfile:
    """Front radius ``max{|d| : ||K(t,d)|| >= eps}`` for each time and the
    spatial decay rate beyond the front."""
    if not 1e-12 < eps < 1e-2:
        raise ValueError("eps must lie in (1e-12, 1e-2)")
    if propagator is None:
        if M is None:
            M = max(DEFAULT_NODES, 2 ** math.ceil(math.log2(4 * d_max + 4)))
        propagator = BlockPropagator(pot, mu, M)
    ts = np.asarray(ts, dtype=float)
    roundoff = phase_roundoff(ts.max(initial=0.0), propagator.phase_scale)
    if roundoff > eps:
        raise MethodUnavailable(
            f"phase roundoff {roundoff:.2e} at t={ts.max():.3g} exceeds the threshold eps={eps:g}")
    d = np.arange(d_max + 1)
    norms = np.empty((ts.size, d.size))
    floors = np.empty(ts.size)
    for i, t in enumerate(ts):
        plus = propagator.norms(t, d)
        minus = propagator.norms(t, -d)
        norms[i] = np.maximum(plus, minus)
        floors[i] = _quadrature_floor(propagator, t, norms[i])
    fronts = np.array([_front(row, eps) for row in norms])
    if np.any(fronts < 0):
        bad = ts[fronts < 0]
        raise ThresholdNeverCrossed(f"||K|| < eps={eps} for every offset at t={bad.tolist()}")
    rates = [_decay_rate(d, row, f, fl, eps) for row, f, fl in zip(norms, fronts, floors)]
    rates = [r for r in rates if r is not None]
    eta = float(np.median(rates)) if rates else float("nan")
    return ConeProfile(mu=float(mu), t=ts, d=d, norms=norms, eps=eps, d_front=fronts, eta_fit=eta,
                       v_lr_bound=constants(pot, rho0).v_lr(mu), floors=floors)


@dataclass(frozen=True)
class FrontFit:
    v_front: float
    stderr: float
    ci95: tuple[float, float]
    intercept: float
    residual_rms: float
    n_used: int


def transient_samples(v_lr_bound: float) -> int:
    return max(5, math.ceil(0.1 / v_lr_bound)) if v_lr_bound > 0 else 5


def fit_front_velocity(profile: ConeProfile | None = None, *, t=None, d_front=None,
                       skip: int | None = None) -> FrontFit:
    """Least-squares slope of the front radius against time."""
    if profile is not None:
        t, d_front = profile.t, profile.d_front
        if skip is None:
            skip = transient_samples(profile.v_lr_bound)
    t = np.asarray(t, dtype=float)
    y = np.asarray(d_front, dtype=float)
    skip = 0 if skip is None else skip
    t, y = t[skip:], y[skip:]
    if t.size < MIN_FIT_SAMPLES:
        raise InsufficientSamples(f"need >= {MIN_FIT_SAMPLES} samples after the transient, got {t.size}")
    A = np.vstack([t, np.ones_like(t)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([slope, icpt])
    dof = max(t.size - 2, 1)
    s2 = float(resid @ resid) / dof
    var = s2 / float(np.sum((t - t.mean()) ** 2))
    se = math.sqrt(var)
    return FrontFit(v_front=float(slope), stderr=se, ci95=(float(slope - 1.96 * se), float(slope + 1.96 * se)),
                    intercept=float(icpt), residual_rms=math.sqrt(float(resid @ resid) / t.size), n_used=int(t.size))


def tail_decay(profile: ConeProfile, v: float) -> dict:
    """Mass ``sum_{|d| > v t} ||K(t,d)||^2`` per time and its fitted exponential rate in ``t``.

    Both signs of ``d`` are counted through the symmetrised profile norms.
    """
    masses = []
    for t, row in zip(profile.t, profile.norms):
        sel = profile.d > v * t
        masses.append(float(2 * np.sum(row[sel] ** 2)))
    masses = np.array(masses)
    floor = 4 * float(np.max(profile.floors)) ** 2 * profile.d.size
    ok = (masses > floor) & (profile.t > 0) & (v * profile.t >= 1)
    rate = float("nan")
    if ok.sum() >= 3:
        rate = float(-np.polyfit(profile.t[ok], np.log(masses[ok]), 1)[0])
    return {"t": profile.t.tolist(), "mass": masses.tolist(), "rate": rate, "points": int(ok.sum())}


def default_cone_times(pot: PeriodicPotential, mu: float, *, travel: float = 40.0,
                       samples: int = 21) -> tuple[np.ndarray, int]:
    """Time grid on which the front travels ``travel`` blocks, and a matching ``d_max``."""
    vg = max_group_velocity(pot, mu)
    t_max = travel / vg
    d_max = int(math.ceil(1.5 * travel + 40))
    return np.linspace(0.0, t_max, samples), d_max


# -- asymptotic velocity -------------------------------------------------------

def _require_mu(pot, mu, rho0):
    led = constants(pot, rho0)
    if mu < led.mu0 * (1 - 1e-12):
        raise CouplingBelowThreshold(f"mu={mu:.6g} is below mu0={led.mu0:.6g}")
    return led


def velocity_field(pot: PeriodicPotential, mu: float, M: int = DEFAULT_NODES, *,
                   rho0: float = DEFAULT_RHO0, check_threshold: bool = True):
    """``p mu sum_l d_x zeta_l(x) P_l(x) e_1`` at every node, shape ``(M, p)``, and the bands."""
    bands = hermitian_bands(pot, 1.0 / mu, M, rho0=rho0, check_threshold=check_threshold)
    # P_l e_1 = v_l conj(v_l[0])
    weights = bands.dzeta * np.conj(bands.vectors[:, 0, :])
    vec = pot.p * mu * np.einsum("nl,nil->ni", weights, bands.vectors)
    return vec, bands


def v_asy_exact(pot: PeriodicPotential, mu: float, M: int = DEFAULT_NODES, *,
                rho0: float = DEFAULT_RHO0, check_threshold: bool = True) -> tuple[float, float]:
    """Two readings of the band formula, ``(A, B)``.

    ``A`` is the L2 norm over the Brillouin zone, ``((1/2pi) int ||w(x)||^2 dx)^(1/2)``;
    ``B`` is the norm of the zone average, ``||(1/2pi) int w(x) dx||``, where
    ``w(x) = p mu sum_l d_x zeta_l P_l(x) e_1``.  ``A >= B`` always.
    """
    if check_threshold:
        _require_mu(pot, mu, rho0)
    vec, _ = velocity_field(pot, mu, M, rho0=rho0, check_threshold=check_threshold)
    a = math.sqrt(float(np.mean(np.sum(np.abs(vec) ** 2, axis=1))))
    b = float(np.linalg.norm(vec.mean(axis=0)))
    return a, b


def v_asy_upper(pot: PeriodicPotential, mu: float, M: int = DEFAULT_NODES, *,
                rho0: float = DEFAULT_RHO0, check_threshold: bool = True) -> dict:
    """``2 pi p^2 mu max|d_x zeta|`` next to ``C3/mu^(p-1)``.

    Also checks the band-gap product bound ``prod_{j != l}|zeta_l - zeta_j| >= (gamma/2)^(p-1)``
    that turns the first into the second.
    """
    led = _require_mu(pot, mu, rho0) if check_threshold else constants(pot, rho0)
    bands = hermitian_bands(pot, 1.0 / mu, M, rho0=rho0, check_threshold=check_threshold)
    p = pot.p
    upper = 2 * math.pi * p**2 * mu * float(np.max(np.abs(bands.dzeta)))
    diff = np.abs(bands.zeta[:, :, None] - bands.zeta[:, None, :])
    idx = np.arange(p)
    diff[:, idx, idx] = 1.0
    gap_product = float(np.min(np.prod(diff, axis=2)))
    bound = led.v_asy_bound(mu)
    return {
        "v_asy_upper": upper,
        "v_asy_bound": bound,
        "gap_product_min": gap_product,
        "gap_product_floor": (pot.gamma / 2) ** (p - 1),
        "gap_bound_holds": gap_product >= (pot.gamma / 2) ** (p - 1),
        "upper_le_bound": upper <= bound,
    }


@dataclass(frozen=True)
class DirectVelocity:
    value: float
    value_site: float
    T: float
    N: int
    drift: float
    t: np.ndarray = field(repr=False)
    ratio: np.ndarray = field(repr=False)
    ratio_site: np.ndarray = field(repr=False)


def _evolve_history(pot, mu, N, ts, method):
    ham = TruncatedHamiltonian(pot, mu, N)
    psi0 = LatticeState.delta(N).amplitudes
    if method == "eig":
        states = EigenPropagator(ham).evolve_many(psi0, ts)
    else:
        states = np.empty((len(ts), psi0.size), dtype=complex)
        psi, t_prev = psi0, 0.0
        for i, t in enumerate(ts):
            psi = evolve_chebyshev(ham, psi, t - t_prev)
            t_prev = t
            states[i] = psi
    for s in (states[0], states[-1]):
        check_spill(LatticeState(s, N))
    return states


def v_asy_direct(pot: PeriodicPotential, mu: float, T: float | None = None, N: int | None = None, *,
                 samples: int = 64, travel: float = 30.0, max_doublings: int = 3,
                 rho0: float = DEFAULT_RHO0, method: str | None = None) -> DirectVelocity:
    """``||X psi(t)|| / t`` averaged over the last quarter of ``[0, T]``, ``psi(0) = delta_0``.

    Without ``T`` the run length is chosen so the fastest band travels
    ``travel`` blocks, and is doubled while the ratio still drifts by more
    than 2% over the averaging window.
    """
    auto_T = T is None
    if auto_T:
        vg = max_group_velocity(pot, mu)
        if vg == 0.0:
            return DirectVelocity(0.0, 0.0, 0.0, 0, 0.0, np.zeros(0), np.zeros(0), np.zeros(0))
        T = travel / vg
    attempts = max_doublings + 1 if auto_T else 1
    for _ in range(attempts):
        n_half = N if N is not None else auto_sites(pot, mu, T, rho0=rho0)
        how = method or ("eig" if 2 * n_half + 1 <= EIG_MAX_SITES else "chebyshev")
        ts = np.linspace(0.75 * T, T, samples)
        scale = 2.0 + mu * float(np.max(np.abs(pot.array)))
        if phase_roundoff(T, scale) > PHASE_BUDGET:
            raise MethodUnavailable(
                f"run length T={T:.3g} loses phase accuracy ({phase_roundoff(T, scale):.1e} rad)")
        while True:
            try:
                states = _evolve_history(pot, mu, n_half, ts, how)
                break
            except BoundarySpill:
                # only an automatically sized lattice may grow
                if N is not None or 4 * n_half + 1 > EIG_MAX_SITES:
                    raise
                n_half *= 2
        prob = np.abs(states) ** 2
        n = np.arange(-n_half, n_half + 1)
        j = np.floor_divide(n, pot.p)
        ratio = np.sqrt(prob @ (j.astype(float) ** 2)) / ts
        ratio_site = np.sqrt(prob @ (n.astype(float) ** 2)) / ts
        mean = float(ratio.mean())
        drift = float((ratio.max() - ratio.min()) / mean) if mean > 0 else 0.0
        if drift < DRIFT_TOL:
            return DirectVelocity(mean, float(ratio_site.mean()), float(T), int(n_half), drift,
                                  ts, ratio, ratio_site)
        T *= 2
    raise NotConverged(f"||X psi(t)||/t drifts by {drift:.3%} over the last quarter", drift=drift)


# -- reports ---------------------------------------------------------------------

@dataclass
class VelocityReport:
    mu: float
    v_lr_bound: float
    v_asy_exact_A: float
    v_asy_exact_B: float
    v_asy_upper: float
    v_asy_bound: float
    v_front: float | None = None
    v_front_stderr: float | None = None
    eta_fit: float | None = None
    tail_rate: float | None = None
    v_asy_direct: float | None = None
    v_asy_direct_site: float | None = None
    flagged_variant: str | None = None
    chain_ok: bool = True
    variants_ordered: bool = True
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


def flag_variant(a: float, b: float, direct: float, direct_site: float, rtol: float = FLAG_RTOL) -> str:
    """Name the band-formula reading that reproduces the direct measurement.

    Returns e.g. ``"A:site"`` when variant A agrees with the site-unit
    velocity within ``rtol``; ``"none"`` when nothing agrees.
    """
    for name, val in (("A", a), ("B", b)):
        for unit, ref in (("block", direct), ("site", direct_site)):
            if ref > 0 and abs(val - ref) <= rtol * ref:
                return f"{name}:{unit}"
    return "none"


def velocity_report(pot: PeriodicPotential, mu: float, *, M: int = DEFAULT_NODES, rho0: float = DEFAULT_RHO0,
                    cone: bool = True, direct: bool = True, eps: float = DEFAULT_EPS) -> VelocityReport:
    led = _require_mu(pot, mu, rho0)
    a, b = v_asy_exact(pot, mu, M, rho0=rho0)
    up = v_asy_upper(pot, mu, M, rho0=rho0)
    rep = VelocityReport(
        mu=float(mu), v_lr_bound=led.v_lr(mu), v_asy_exact_A=a, v_asy_exact_B=b,
        v_asy_upper=up["v_asy_upper"], v_asy_bound=up["v_asy_bound"],
    )
    rep.chain_ok = bool(a <= up["v_asy_upper"] and b <= up["v_asy_upper"] and up["upper_le_bound"])
    rep.variants_ordered = bool(a >= b * (1 - 1e-12))
    if cone:
        try:
            ts, d_max = default_cone_times(pot, mu)
            prof = cone_profile(pot, mu, ts, d_max, eps, rho0=rho0)
            fit = fit_front_velocity(prof)
            rep.v_front, rep.v_front_stderr, rep.eta_fit = fit.v_front, fit.stderr, prof.eta_fit
            rep.tail_rate = tail_decay(prof, 2 * fit.v_front)["rate"]
        except MethodUnavailable as exc:
            rep.notes.append(f"light cone skipped: {exc}")
    if direct:
        try:
            dv = v_asy_direct(pot, mu, rho0=rho0)
            rep.v_asy_direct, rep.v_asy_direct_site = dv.value, dv.value_site
            rep.flagged_variant = flag_variant(a, b, dv.value, dv.value_site)
        except MethodUnavailable as exc:
            rep.notes.append(f"direct evolution skipped: {exc}")
    return rep


def check_velocity_ordering(report: VelocityReport) -> dict:
    """Asymptotic velocities must not exceed the light-cone velocity ``C2/mu``."""
    out = {"mu": report.mu, "v_lr_bound": report.v_lr_bound}
    # variant A is in site units, p times the block value: the stricter comparison
    exact = report.v_asy_exact_A
    out["exact_margin"] = report.v_lr_bound - exact
    out["exact_ok"] = exact <= report.v_lr_bound
    if report.v_asy_direct is not None:
        out["direct_margin"] = report.v_lr_bound - report.v_asy_direct
        out["direct_ok"] = report.v_asy_direct <= report.v_lr_bound
    out["passed"] = bool(out["exact_ok"] and out.get("direct_ok", True))
    return out


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@dataclass
class SweepResult:
    p: int
    reports: list[VelocityReport]
    slope_exact: float
    slope_front: float | None
    slope_direct: float | None
    monotone: bool
    velocity_ordering: list[dict]

    def summary(self) -> dict:
        return {
            "p": self.p,
            "mu": [r.mu for r in self.reports],
            "slope_exact": self.slope_exact,
            "expected_slope": -(self.p - 1),
            "slope_front": self.slope_front,
            "slope_direct": self.slope_direct,
            "monotone": self.monotone,
            "chain_ok": all(r.chain_ok for r in self.reports),
            "velocity_ordering_passed": all(c["passed"] for c in self.velocity_ordering),
            "velocity_ordering": self.velocity_ordering,
        }


def _report_task(args):
    pot, mu, kw = args
    return velocity_report(pot, mu, **kw)


def scaling_sweep(pot: PeriodicPotential, mus, *, M: int = DEFAULT_NODES, rho0: float = DEFAULT_RHO0,
                  cone: bool = False, direct: bool = False, enforce_span: bool = True,
                  workers: int = 1) -> SweepResult:
    """Velocity reports over a list of couplings and log-log slopes against ``mu``.

    With ``workers > 1`` the couplings are processed in parallel; results
    keep the order of ``mus`` so output does not depend on scheduling.
    """
    mus = sorted(float(m) for m in mus)
    if enforce_span and (len(mus) < 4 or mus[-1] / mus[0] < 10 * (1 - 1e-12)):
        raise ValueError("a sweep needs >= 4 values of mu spanning at least one decade")
    kw = dict(M=M, rho0=rho0, cone=cone, direct=direct)
    tasks = [(pot, mu, kw) for mu in mus]
    if workers > 1 and len(mus) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(mus))) as ex:
            reports = list(ex.map(_report_task, tasks))
    else:
        reports = [_report_task(t) for t in tasks]
    exact = [r.v_asy_exact_A for r in reports]
    fronts = [r.v_front for r in reports]
    directs = [r.v_asy_direct for r in reports]
    slope_front = loglog_slope(mus, fronts) if cone and None not in fronts else None
    slope_direct = loglog_slope(mus, directs) if direct and None not in directs else None
    return SweepResult(
        p=pot.p, reports=reports, slope_exact=loglog_slope(mus, exact), slope_front=slope_front,
        slope_direct=slope_direct, monotone=bool(np.all(np.diff(exact) < 0)),
        velocity_ordering=[check_velocity_ordering(r) for r in reports],
    )


def direct_scaling(pot: PeriodicPotential, mus, **kw) -> tuple[float, list[DirectVelocity]]:
    """Log-log slope of the directly measured asymptotic velocity; no ``mu >= mu0`` requirement."""
    runs = [v_asy_direct(pot, mu, **kw) for mu in mus]
    return loglog_slope(mus, [r.value for r in runs]), runs
