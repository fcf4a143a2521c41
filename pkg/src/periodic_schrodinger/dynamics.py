"""Block propagators from the Floquet representation and real-space time evolution.

The ``(j, k)`` block of ``exp(-i t H_mu)`` depends only on ``d = j - k`` and is
the ``d``-th Fourier coefficient of ``exp(-i t A_p(mu, e^{ix}))``.  It is
evaluated with the equal-weight trapezoid rule on ``M`` nodes, which is
spectrally accurate for this smooth periodic integrand.  All offsets are
block offsets.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import jv

from .errors import BoundarySpill, DegenerateBands, MethodUnavailable, QuadratureUnresolved
from .floquet import DEFAULT_NODES, band_derivatives, fiber_eigh, grid
from .model import DEFAULT_RHO0, PeriodicPotential, constants

QUADRATURE_TOL = 1e-10
SPILL_TOL = 1e-8
SPILL_WIDTH = 5
EIG_MAX_SITES = 4001
CHEB_TAIL_TOL = 1e-12
CONE_MARGIN = 50


@dataclass(frozen=True)
class BlockKernel:
    t: float
    d: int
    matrix: np.ndarray
    M: int

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))


class BlockPropagator:
    """Fiber eigendecompositions on an ``M``-node grid, shared across times and offsets."""

    def __init__(self, pot: PeriodicPotential, mu: float, M: int = DEFAULT_NODES):
        if M % 2 or M < 4 * pot.p:
            raise ValueError(f"M must be even and >= 4p = {4 * pot.p}, got {M}")
        if not mu > 0:
            raise ValueError("mu must be positive")
        self.pot, self.mu, self.M = pot, float(mu), M
        zeta, vecs = fiber_eigh(pot, 1.0 / mu, grid(M))
        base, delta = refined_dispersion(pot, 1.0 / mu, grid(M), zeta)
        # energy = mu * (base + delta): base is one constant per band, delta
        # carries all x-dependence to full relative precision
        self.offsets = mu * base
        self.dispersion = mu * delta
        self.energies = self.offsets + self.dispersion  # eigenvalues of A_p(mu, e^{ix}), (M, p)
        self.vectors = vecs

    @property
    def phase_scale(self) -> float:
        """Largest x-dependent part of the energies; sets the roundoff floor of ``t * E(x)``."""
        return float(np.max(np.abs(self.dispersion)))

    def fiber_exponentials(self, t: float) -> np.ndarray:
        """``exp(-i t A_p(mu, e^{i x_n}))`` for every node, shape ``(M, p, p)``."""
        phase = np.exp(-1j * t * self.dispersion) * np.exp(-1j * t * self.offsets)
        return np.einsum("nil,nl,njl->nij", self.vectors, phase, np.conj(self.vectors))

    def all_offsets(self, t: float) -> np.ndarray:
        """Kernels for every offset at once; row ``d mod M`` holds offset ``d``."""
        return np.fft.fft(self.fiber_exponentials(t), axis=0) / self.M

    def kernels(self, t: float, ds) -> np.ndarray:
        ds = np.asarray(ds, dtype=int)
        if np.any(np.abs(ds) >= self.M // 2):
            raise ValueError(f"|d| must be < M/2 = {self.M // 2} to avoid aliasing")
        return self.all_offsets(t)[np.mod(ds, self.M)]

    def norms(self, t: float, ds) -> np.ndarray:
        return np.linalg.norm(self.kernels(t, ds), ord=2, axis=(1, 2))


def _taylor_shift(coeffs: np.ndarray, c: float) -> np.ndarray:
    """Coefficients (lowest first) of ``P(c + delta)`` in powers of ``delta``."""
    a = np.array(coeffs[::-1], dtype=float)  # lowest first
    n = a.size
    for k in range(n - 1):
        for j in range(n - 2, k - 1, -1):
            a[j] += c * a[j + 1]
    return a


def refined_dispersion(pot: PeriodicPotential, lam: float, xs, zeta, iters: int = 4):
    """Split each band into ``zeta_l(pi/2) + delta_l(x)`` with ``delta`` to full relative precision.

    The characteristic polynomial is ``D(zeta) - 2 lam^p cos x`` with ``D``
    independent of ``x``.  Expanding ``D`` around its root ``c_l = zeta_l(pi/2)``
    turns the band equation into ``sum_k d_k delta^k = 2 lam^p cos x`` with no
    cancellation, which Newton's method solves from the eigensolver value.
    """
    from .charpoly import charpoly_coeffs  # local: charpoly is only needed here

    coeffs = charpoly_coeffs(pot, lam, 1j).real  # z = i gives z + 1/z = 0
    dcoeffs = np.polyder(coeffs)
    order = np.argsort(np.argsort(pot.array))
    base = np.sort(np.roots(coeffs).real)[order]
    for _ in range(3):
        base = base - np.polyval(coeffs, base) / np.polyval(dcoeffs, base)
    rhs = 2 * lam**pot.p * np.cos(np.asarray(xs, dtype=float))
    delta = np.asarray(zeta, dtype=float) - base
    for ell in range(pot.p):
        d = _taylor_shift(coeffs, base[ell])[1:]  # drop D(c), zero up to roundoff
        dd = d * np.arange(1, d.size + 1)
        poly = d[::-1]  # highest first, no constant term
        dpoly = dd[::-1]
        x = delta[:, ell]
        for _ in range(iters):
            f = np.polyval(poly, x) * x - rhs
            x = x - f / np.polyval(dpoly, x)
        delta[:, ell] = x
    return base, delta


def block_kernel(pot: PeriodicPotential, mu: float, t: float, d: int, M: int = DEFAULT_NODES, *,
                 check_convergence: bool = True, tol: float = QUADRATURE_TOL) -> BlockKernel:
    """The ``p x p`` block of ``exp(-i t H_mu)`` at block offset ``d``."""
    k = BlockPropagator(pot, mu, M).kernels(t, [d])[0]
    if check_convergence:
        k2 = BlockPropagator(pot, mu, 2 * M).kernels(t, [d])[0]
        change = float(np.max(np.abs(k2 - k)))
        if change > tol:
            raise QuadratureUnresolved(
                f"doubling M={M} changed the kernel by {change:.3e} > {tol:.1e}; increase M")
    return BlockKernel(t=float(t), d=int(d), matrix=k, M=M)


# -- closed form for the alternating potential -----------------------------

def _p2_scalar_coefficients(mu: float, t: float, nodes: int):
    x = grid(nodes)
    omega = np.sqrt(mu**2 + 2 * (1 + np.cos(x)))
    f_plus = np.exp(1j * t * omega)
    f_minus = np.exp(-1j * t * omega)
    g_plus = mu / omega * f_plus
    g_minus = mu / omega * f_minus
    return [np.fft.fft(h) / nodes for h in (f_plus, f_minus, g_plus, g_minus)]


def p2_coefficient_nodes(mu: float, t: float, d_max: int, *, tol: float = 1e-14) -> int:
    """Node count at which the scalar Fourier coefficients are converged to ``tol``."""
    n = 256
    while n < 2 * d_max + 8:
        n *= 2
    prev = _p2_scalar_coefficients(mu, t, n)
    while n < 2**20:
        n *= 2
        cur = _p2_scalar_coefficients(mu, t, n)
        change = max(np.max(np.abs(c[: n // 4] - p[: n // 4])) for c, p in zip(cur, prev))
        if change < tol:
            return n
        prev = cur
    raise QuadratureUnresolved("scalar Fourier coefficients did not converge")


def block_kernel_p2_closed(mu: float, t: float, d: int, *, nodes: int | None = None) -> BlockKernel:
    """Alternating-potential block assembled from the scalar functions
    ``f^{+-}(x) = exp(+-i t w(x))`` and ``g^{+-} = mu f^{+-} / w`` with
    ``w(x) = sqrt(mu^2 + 2(1 + cos x))``.

    Entry by entry in the fiber::

        (1,1) = (f^- + f^+)/2 + (g^- - g^+)/2
        (2,2) = conj((1,1))
        (1,2) = (1 + e^{ix}) (g^- - g^+) / (2 mu)
        (2,1) = -conj((1,2))

    Multiplication by ``e^{+-ix}`` shifts Fourier coefficients by one, so the
    off-diagonal blocks combine coefficients at ``d`` and ``d -+ 1``.
    """
    if mu < 1:
        raise ValueError("closed form is stated for mu >= 1")
    if nodes is None:
        nodes = p2_coefficient_nodes(mu, t, abs(d) + 1)
    fp, fm, gp, gm = _p2_scalar_coefficients(mu, t, nodes)

    def at(c, k):
        return c[k % nodes]

    k11 = 0.5 * (at(fm, d) + at(fp, d)) + 0.5 * (at(gm, d) - at(gp, d))
    k22 = 0.5 * (at(fp, d) + at(fm, d)) + 0.5 * (at(gp, d) - at(gm, d))
    k12 = (at(gm, d) - at(gp, d) + at(gm, d - 1) - at(gp, d - 1)) / (2 * mu)
    k21 = (at(gm, d) - at(gp, d) + at(gm, d + 1) - at(gp, d + 1)) / (2 * mu)
    return BlockKernel(t=float(t), d=int(d), matrix=np.array([[k11, k12], [k21, k22]]), M=nodes)


def p2_fiber_exponential(mu: float, t: float, x) -> np.ndarray:
    """``exp(-i t A_2(mu, e^{ix}))`` from the scalar closed form, shape ``(..., 2, 2)``."""
    x = np.asarray(x, dtype=float)
    omega = np.sqrt(mu**2 + 2 * (1 + np.cos(x)))
    fp, fm = np.exp(1j * t * omega), np.exp(-1j * t * omega)
    gp, gm = mu / omega * fp, mu / omega * fm
    e11 = 0.5 * (fm + fp) + 0.5 * (gm - gp)
    e12 = (1 + np.exp(1j * x)) / (2 * mu) * (gm - gp)
    out = np.empty(x.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = e11
    out[..., 1, 1] = np.conj(e11)
    out[..., 0, 1] = e12
    out[..., 1, 0] = -np.conj(e12)
    return out


# -- real-space evolution ----------------------------------------------------

@dataclass(frozen=True)
class TruncatedHamiltonian:
    """``H_mu`` restricted to sites ``-N..N``: diagonal ``mu V_{n mod p}``, unit off-diagonal."""

    pot: PeriodicPotential
    mu: float
    N: int

    @property
    def sites(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    @cached_property
    def diagonal(self) -> np.ndarray:
        return self.mu * self.pot.at_site(self.sites)

    @property
    def offdiagonal(self) -> np.ndarray:
        return np.ones(2 * self.N)

    @property
    def spectral_radius_bound(self) -> float:
        return 2.0 + self.mu * float(np.max(np.abs(self.pot.array)))

    def apply(self, psi: np.ndarray) -> np.ndarray:
        out = self.diagonal * psi
        out[:-1] += psi[1:]
        out[1:] += psi[:-1]
        return out


@dataclass(frozen=True)
class LatticeState:
    """Amplitudes on sites ``-N..N`` (index ``n + N``)."""

    amplitudes: np.ndarray
    N: int

    @classmethod
    def delta(cls, N: int, site: int = 0) -> "LatticeState":
        psi = np.zeros(2 * N + 1, dtype=complex)
        psi[site + N] = 1.0
        return cls(psi, N)

    @property
    def sites(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def amplitude(self, n: int) -> complex:
        return complex(self.amplitudes[n + self.N])

    def edge_weight(self, width: int = SPILL_WIDTH) -> float:
        a = np.abs(self.amplitudes)
        return float(max(a[:width].max(), a[-width:].max()))


def check_spill(state: LatticeState, tol: float = SPILL_TOL) -> None:
    w = state.edge_weight()
    if w > tol:
        raise BoundarySpill(f"amplitude {w:.3e} within {SPILL_WIDTH} sites of the edge (N={state.N})")


def chebyshev_order(half_width: float, t: float) -> int:
    """Expansion order whose Bessel-coefficient tail is below ``CHEB_TAIL_TOL``."""
    arg = half_width * abs(t)
    order = int(np.ceil(1.2 * arg + 40))
    while True:
        tail = np.abs(jv(np.arange(order - 10, order + 1), arg))
        if tail.max() < CHEB_TAIL_TOL:
            return order
        order = int(order * 1.2) + 10


def evolve_chebyshev(ham: TruncatedHamiltonian, psi0: np.ndarray, t: float) -> np.ndarray:
    a = ham.spectral_radius_bound
    order = chebyshev_order(a, t)
    coeffs = jv(np.arange(order + 1), a * t)
    phase = (-1j) ** np.arange(order + 1)
    c = 2.0 * coeffs * phase
    c[0] = coeffs[0]
    prev = psi0.astype(complex)
    cur = ham.apply(prev) / a
    out = c[0] * prev + c[1] * cur
    for k in range(2, order + 1):
        prev, cur = cur, 2.0 * ham.apply(cur) / a - prev
        out += c[k] * cur
    return out


class EigenPropagator:
    """Full eigendecomposition of the truncated Hamiltonian; evolves to any time."""

    def __init__(self, ham: TruncatedHamiltonian, max_sites: int = EIG_MAX_SITES):
        n = 2 * ham.N + 1
        if n > max_sites:
            raise MethodUnavailable(f"eigendecomposition limited to {max_sites} sites, got {n}")
        self.ham = ham
        try:
            self.w, self.q = eigh_tridiagonal(ham.diagonal, ham.offdiagonal)
        except np.linalg.LinAlgError:
            # MRRR occasionally fails on strongly graded diagonals; QL/QR does not
            self.w, self.q = eigh_tridiagonal(ham.diagonal, ham.offdiagonal, lapack_driver="stev")

    def evolve(self, psi0: np.ndarray, t: float) -> np.ndarray:
        coef = self.q.T @ psi0
        return self.q @ (np.exp(-1j * t * self.w) * coef)

    def evolve_many(self, psi0: np.ndarray, ts) -> np.ndarray:
        """States at all times ``ts``, shape ``(len(ts), sites)``."""
        coef = self.q.T @ psi0
        phases = np.exp(-1j * np.outer(ts, self.w))
        return (phases * coef) @ self.q.T


def evolve(pot: PeriodicPotential, mu: float, psi0: LatticeState, t: float,
           method: str = "chebyshev", *, check: bool = True) -> LatticeState:
    """``exp(-i t H_N) psi0`` on the truncated lattice of ``psi0``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    ham = TruncatedHamiltonian(pot, mu, psi0.N)
    if t == 0:
        out = psi0.amplitudes.astype(complex).copy()
    elif method == "chebyshev":
        out = evolve_chebyshev(ham, psi0.amplitudes, t)
    elif method == "eig":
        out = EigenPropagator(ham).evolve(psi0.amplitudes.astype(complex), t)
    else:
        raise MethodUnavailable(f"unknown method {method!r}")
    state = LatticeState(out, psi0.N)
    if check:
        check_spill(state)
    return state


def max_group_velocity(pot: PeriodicPotential, mu: float, nodes: int = 512) -> float:
    """Largest band slope of ``A_p(mu, e^{ix})`` in blocks per unit time.

    Uses the closed-form band derivative; finite differences of the sorted
    energies are the fallback when two bands touch.
    """
    xs = grid(nodes)
    zeta, _ = fiber_eigh(pot, 1.0 / mu, xs)
    try:
        return float(mu * np.max(np.abs(band_derivatives(1.0 / mu, xs, zeta))))
    except DegenerateBands:
        e = np.sort(mu * zeta, axis=1)
        slope = (np.roll(e, -1, axis=0) - np.roll(e, 1, axis=0)) / (2 * 2 * np.pi / nodes)
        return float(np.max(np.abs(slope)))


def auto_sites(pot: PeriodicPotential, mu: float, t: float, *, rho0: float = DEFAULT_RHO0,
               margin: int = CONE_MARGIN) -> int:
    """Half-width ``N`` of a lattice that contains the light cone at time ``t``.

    The cone speed is the smaller of ``C2/mu`` and 1.25 times the largest
    group velocity; the spill check after evolution confirms the choice.
    """
    led = constants(pot, rho0)
    v_block = min(led.v_lr(mu), 1.25 * max_group_velocity(pot, mu))
    return int(np.ceil(pot.p * v_block * abs(t))) + margin


def position_moments(state: LatticeState, p: int) -> dict:
    """Moments of the block position ``|j|`` (sublattice-blind) and of the site position."""
    prob = np.abs(state.amplitudes) ** 2
    n = state.sites
    j = np.floor_divide(n, p)
    return {
        "mean_abs_block": float(np.sum(prob * np.abs(j))),
        "second_block": float(np.sum(prob * j**2)),
        "norm_X_block": float(np.sqrt(np.sum(prob * j**2))),
        "mean_abs_site": float(np.sum(prob * np.abs(n))),
        "second_site": float(np.sum(prob * n**2)),
        "norm_X_site": float(np.sqrt(np.sum(prob * n**2))),
    }


def unitarity_defect(pot: PeriodicPotential, mu: float, t: float, d_max: int,
                     M: int = DEFAULT_NODES, *, propagator: BlockPropagator | None = None) -> float:
    """``|| sum_{|d| <= d_max} K(t,d) K(t,d)^* - I ||`` (spectral norm)."""
    prop = propagator or BlockPropagator(pot, mu, M)
    ks = prop.kernels(t, np.arange(-d_max, d_max + 1))
    acc = np.einsum("dij,dkj->ik", ks, np.conj(ks))
    return float(np.linalg.norm(acc - np.eye(pot.p), 2))


def tail_mass(pot: PeriodicPotential, mu: float, t: float, v: float, M: int = DEFAULT_NODES, *,
              propagator: BlockPropagator | None = None) -> float:
    """``sum_{|d| > v|t|} ||K(t,d)||^2`` over the offsets resolved by the grid."""
    prop = propagator or BlockPropagator(pot, mu, M)
    ds = np.arange(-(prop.M // 2) + 1, prop.M // 2)
    norms = prop.norms(t, ds)
    return float(np.sum(norms[np.abs(ds) > v * abs(t)] ** 2))
