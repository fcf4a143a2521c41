"""Floquet matrices, band functions, projections and band derivatives.

The unscaled fiber ``A_p(mu, z)`` has diagonal ``mu*V``, unit hopping and
corner entries ``z`` (row 1, column p) and ``1/z`` (row p, column 1).  The
scaled fiber ``A~_p(lam, z) = A_p(mu, z)/mu`` with ``lam = 1/mu`` has
diagonal ``V`` and hopping ``lam``.  For ``p = 2`` both hops connect the
same two sublattices and the off-diagonal entries become ``1 + z`` and
``1 + 1/z``.

Spectral projections are formed from orthonormal eigenvectors.  For simple
eigenvalues this coincides with the Riesz contour integral of the resolvent
around ``V_l``, which is therefore never evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .charpoly import charpoly_coeffs
from .errors import (
    AmbiguousLabeling,
    CouplingAboveThreshold,
    DegenerateBands,
    ZeroCornerParameter,
)
from .model import DEFAULT_RHO0, PeriodicPotential, constants
from .roots import aberth_roots

DEFAULT_NODES = 512
DEGENERACY_RTOL = 1e-8


@dataclass(frozen=True)
class FloquetMatrix:
    matrix: np.ndarray
    pot: PeriodicPotential
    coupling: float
    z: complex
    scaled: bool
    x: float | None = None

    @property
    def is_unitary_phase(self) -> bool:
        return self.x is not None


def _corner(x, z):
    if x is not None:
        w = np.exp(1j * np.asarray(x, dtype=float))
        return w, np.conj(w)
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise ZeroCornerParameter("corner parameter z must be nonzero")
    return z, 1.0 / z


def floquet_stack(pot: PeriodicPotential, coupling: float, *, x=None, z=None,
                  scaled: bool = False) -> np.ndarray:
    """Fiber matrices for an array of phases ``x`` (or corner parameters ``z``).

    Returns shape ``(..., p, p)``.  Passing ``x`` guarantees exact Hermitian
    symmetry because the lower corner is the exact conjugate of the upper one.
    """
    if (x is None) == (z is None):
        raise ValueError("give exactly one of x or z")
    w, w_inv = _corner(x, z)
    w = np.atleast_1d(w)
    w_inv = np.atleast_1d(w_inv)
    p = pot.p
    if scaled:
        diag, hop = pot.array, float(coupling)
    else:
        diag, hop = float(coupling) * pot.array, 1.0
    out = np.zeros(w.shape + (p, p), dtype=complex)
    idx = np.arange(p)
    out[..., idx, idx] = diag
    if p == 2:
        out[..., 0, 1] = hop * (1.0 + w)
        out[..., 1, 0] = hop * (1.0 + w_inv)
    else:
        out[..., idx[:-1], idx[1:]] = hop
        out[..., idx[1:], idx[:-1]] = hop
        out[..., 0, p - 1] = hop * w
        out[..., p - 1, 0] = hop * w_inv
    return out


def build_floquet(pot: PeriodicPotential, coupling: float, *, x: float | None = None,
                  z: complex | None = None, scaled: bool = False) -> FloquetMatrix:
    """``A_p(mu, .)`` when ``scaled`` is false, ``A~_p(lam, .)`` otherwise."""
    m = floquet_stack(pot, coupling, x=x, z=z, scaled=scaled)[0]
    zz = complex(np.exp(1j * x)) if x is not None else complex(z)
    return FloquetMatrix(matrix=m, pot=pot, coupling=float(coupling), z=zz, scaled=scaled,
                         x=None if x is None else float(x))


def grid(M: int) -> np.ndarray:
    return 2 * np.pi * np.arange(M) / M


def _label_order(pot: PeriodicPotential) -> np.ndarray:
    # ascending eigenvalue k belongs to the k-th smallest V
    return np.argsort(np.argsort(pot.array))


def fiber_eigh(pot: PeriodicPotential, lam: float, xs) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues ``(M, p)`` and eigenvectors ``(M, p, p)`` of the scaled
    Hermitian fibers, labeled so that band ``l`` is the one of rank ``rank(V_l)``.

    No coupling gate: for ``lam`` above ``lambda_0`` the labels are simply
    ordinal.  Eigenvector columns follow the labels.
    """
    mats = floquet_stack(pot, lam, x=np.atleast_1d(xs), scaled=True)
    vals, vecs = np.linalg.eigh(mats)
    order = _label_order(pot)
    return vals[:, order], vecs[:, :, order]


@dataclass(frozen=True)
class BandData:
    """Bands of the scaled fiber on the uniform grid ``x_k = 2 pi k / M``.

    ``zeta[k, l]`` is band ``l`` at node ``k``; ``vectors[k, :, l]`` its unit
    eigenvector and ``dzeta[k, l]`` its x-derivative.
    """

    pot: PeriodicPotential
    lam: float
    x: np.ndarray
    zeta: np.ndarray
    vectors: np.ndarray
    dzeta: np.ndarray
    projections: np.ndarray = field(repr=False)

    @property
    def M(self) -> int:
        return self.x.size


def projections_from_vectors(vectors: np.ndarray) -> np.ndarray:
    """Rank-one projections ``P[k, l] = v v^*`` with shape ``(M, p, p, p)``."""
    v = np.moveaxis(vectors, -1, -2)  # (M, l, i)
    return v[..., :, None] * np.conj(v[..., None, :])


def _require_below_threshold(pot, lam, rho0):
    led = constants(pot, rho0)
    if lam > led.lambda0 * (1 + 1e-12):
        raise CouplingAboveThreshold(
            f"lam={lam:.6g} exceeds lambda0={led.lambda0:.6g}; band labeling by nearest V is not guaranteed")
    return led


def hermitian_bands(pot: PeriodicPotential, lam: float, M: int = DEFAULT_NODES, *,
                    rho0: float = DEFAULT_RHO0, check_threshold: bool = True) -> BandData:
    """Band functions, projections and derivatives on an ``M``-node grid."""
    if M < 4 * pot.p or M % 2:
        raise ValueError(f"M must be even and >= 4p = {4 * pot.p}, got {M}")
    if check_threshold:
        _require_below_threshold(pot, lam, rho0)
    xs = grid(M)
    vals, vecs = fiber_eigh(pot, lam, xs)
    if check_threshold:
        dev = np.abs(vals - pot.array)
        if np.any(dev >= pot.gamma / 4):
            raise AmbiguousLabeling(f"band deviates {dev.max():.3e} >= gamma/4 from its center")
    dz = band_derivatives(lam, xs, vals, scale=max(1.0, pot.Gamma))
    return BandData(pot=pot, lam=float(lam), x=xs, zeta=vals, vectors=vecs, dzeta=dz,
                    projections=projections_from_vectors(vecs))


def band_derivatives(lam: float, xs, zeta: np.ndarray, *, scale: float | None = None) -> np.ndarray:
    """Derivatives of every band at every node, shape like ``zeta`` ``(M, p)``.

    Uses ``d zeta_l/dx = -2 lam^p sin x / prod_{j != l}(zeta_l - zeta_j)``,
    which for ``p = 2`` is the same expression as the closed form
    ``-2 lam^2 sin x / (zeta_l - zeta_j)``.
    """
    zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    p = zeta.shape[1]
    if scale is None:
        scale = max(1.0, float(np.ptp(zeta)))
    diff = zeta[:, :, None] - zeta[:, None, :]
    idx = np.arange(p)
    diff[:, idx, idx] = 1.0
    gaps = np.abs(diff)
    gaps[:, idx, idx] = np.inf
    if np.min(gaps) < DEGENERACY_RTOL * scale:
        raise DegenerateBands(f"band gap {np.min(gaps):.3e} below tolerance; derivative formula singular")
    denom = np.prod(diff, axis=2)
    return -2.0 * lam**p * np.sin(xs)[:, None] / denom


def band_derivative(ell: int, lam: float, x: float, zetas, *, scale: float | None = None) -> float:
    """Derivative of band ``ell`` (1-based) at phase ``x`` given all band values there."""
    zetas = np.asarray(zetas, dtype=float)
    p = zetas.size
    if not 1 <= ell <= p:
        raise ValueError(f"band index {ell} not in 1..{p}")
    if p == 2:
        other = zetas[2 - ell]
        gap = zetas[ell - 1] - other
        if abs(gap) < DEGENERACY_RTOL * (scale if scale else max(1.0, abs(gap))):
            raise DegenerateBands("the two bands touch")
        # closed form: |d zeta|^2 = 4 lam^4 sin^2 x / gap^2, gap^2 = (V1-V2)^2 + 8 lam^2 (1 + cos x)
        mag = 2.0 * lam**2 * abs(np.sin(x)) / abs(gap)
        return float(-np.sign(np.sin(x)) * np.sign(gap) * mag)
    return float(band_derivatives(lam, [x], zetas[None, :], scale=scale)[0, ell - 1])


def p2_band_values(pot: PeriodicPotential, lam: float, xs) -> np.ndarray:
    """Closed-form bands of the 2x2 scaled fiber, ordered (lower, upper)."""
    if pot.p != 2:
        raise ValueError("closed form only for p = 2")
    xs = np.asarray(xs, dtype=float)
    mean = 0.5 * (pot.values[0] + pot.values[1])
    root = 0.5 * np.sqrt((pot.values[0] - pot.values[1]) ** 2 + 8 * lam**2 * (1 + np.cos(xs)))
    return np.stack([mean - root, mean + root], axis=-1)


# -- non-Hermitian fibers on the annulus ------------------------------------

def annulus_eigenvalues(pot: PeriodicPotential, lam: float, z: complex, *,
                        rho0: float = DEFAULT_RHO0, check_threshold: bool = True) -> np.ndarray:
    """Eigenvalues of ``A~_p(lam, z)`` labeled by nearest ``V_l``.

    Computed as roots of the characteristic polynomial by Aberth iteration
    seeded at ``V_1..V_p``.
    """
    z = complex(z)
    if z == 0:
        raise ZeroCornerParameter("corner parameter z must be nonzero")
    if not 1 / (2 * rho0) < abs(z) < 2 * rho0:
        raise ValueError(f"|z|={abs(z):.4g} outside the annulus (1/(2 rho0), 2 rho0)")
    if check_threshold:
        _require_below_threshold(pot, lam, rho0)
    roots = aberth_roots(charpoly_coeffs(pot, lam, z), pot.array.astype(complex))
    dist = np.abs(roots[:, None] - pot.array[None, :])
    close = dist < pot.gamma / 4
    if not np.all(close.sum(axis=1) == 1) or not np.all(close.sum(axis=0) == 1):
        raise AmbiguousLabeling(f"roots {roots} are not each within gamma/4 of exactly one V_l")
    labeled = np.empty(pot.p, dtype=complex)
    labeled[np.argmax(close, axis=1)] = roots
    return labeled


@dataclass(frozen=True)
class LocalizationRecord:
    lam: float
    z: complex
    ell: int
    zeta: complex
    deviation: float
    budget: float
    passed: bool


@dataclass(frozen=True)
class LocalizationReport:
    records: list[LocalizationRecord]
    worst_ratio: float
    worst_imag_ratio: float
    passed: bool

    @property
    def failures(self) -> list[LocalizationRecord]:
        return [r for r in self.records if not r.passed]

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "samples": len(self.records),
            "failures": len(self.failures),
            "worst_ratio": self.worst_ratio,
            "worst_imag_ratio": self.worst_imag_ratio,
        }


def _ratio(num, den):
    if den == 0:
        return 0.0 if num == 0 else np.inf
    return num / den


def verify_localization(pot: PeriodicPotential, lam: float, n_samples: int = 64, *,
                        rho0: float = DEFAULT_RHO0, zs=None) -> LocalizationReport:
    """Check every eigenvalue sits in its disk ``|zeta_l - V_l| <= gamma_0(lam)``.

    By default samples ``n_samples`` points on each of the circles
    ``|z| = rho0`` and ``|z| = 1/rho0``.
    """
    led = _require_below_threshold(pot, lam, rho0)
    if zs is None:
        theta = 2 * np.pi * (np.arange(n_samples) + 0.5) / n_samples
        zs = np.concatenate([rho0 * np.exp(1j * theta), np.exp(1j * theta) / rho0])
    budget = led.gamma0(lam)
    records = []
    worst = worst_im = 0.0
    for z in zs:
        roots = annulus_eigenvalues(pot, lam, z, rho0=rho0)
        for ell, zeta in enumerate(roots, start=1):
            dev = float(abs(zeta - pot.values[ell - 1]))
            ok = dev <= budget and dev < pot.gamma / 4 and abs(zeta.imag) <= budget
            worst = max(worst, _ratio(dev, budget))
            worst_im = max(worst_im, _ratio(abs(zeta.imag), budget))
            records.append(LocalizationRecord(lam=float(lam), z=complex(z), ell=ell, zeta=complex(zeta),
                                              deviation=dev, budget=budget, passed=bool(ok)))
    return LocalizationReport(records=records, worst_ratio=float(worst), worst_imag_ratio=float(worst_im),
                              passed=all(r.passed for r in records))


def spectrum_p2(mu: float) -> tuple[list[tuple[float, float]], float]:
    """Spectrum of the alternating-potential operator as two bands and its total length."""
    if mu < 1:
        raise ValueError("closed-form spectrum is stated for mu >= 1")
    top = float(np.sqrt(mu**2 + 4))
    bands = [(-top, -float(mu)), (float(mu), top)]
    return bands, 2 * (top - mu)
