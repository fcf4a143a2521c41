"""Jacobi determinants by matching enumeration, and the Floquet characteristic polynomial.

A matching of the path ``1 - 2 - ... - p`` is a set of edges
``{j, j+1}`` no two of which share a vertex.  Every matching contributes one
term to the determinant of a Jacobi (Hermitian tridiagonal) matrix: a
factor ``-|b_j|^2`` per edge times the diagonal entries of the uncovered
vertices.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainViolation, LengthMismatch, ZeroCornerParameter
from .model import PeriodicPotential

FORMULA_MAX_P = 20
COFACTOR_MAX_P = 14


@dataclass(frozen=True)
class JacobiSpec:
    """Diagonal ``a`` (length p) and upper off-diagonal ``b`` (length p-1).

    The matrix carries ``b_j`` above and ``conj(b_j)`` below the diagonal.
    """

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=complex))
        b = np.atleast_1d(np.asarray(self.b, dtype=complex)) if len(self.b) else np.zeros(0, complex)
        if b.size != max(a.size - 1, 0):
            raise LengthMismatch(f"need {a.size - 1} off-diagonal entries, got {b.size}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def p(self) -> int:
        return self.a.size

    def matrix(self) -> np.ndarray:
        m = np.diag(self.a)
        idx = np.arange(self.p - 1)
        m[idx, idx + 1] = self.b
        m[idx + 1, idx] = np.conj(self.b)
        return m


@lru_cache(maxsize=None)
def _matchings(p: int) -> tuple[tuple[int, ...], ...]:
    # edges are 1-based: j stands for {j, j+1}
    out = []

    def extend(start, chosen):
        out.append(tuple(chosen))
        for j in range(start, p):
            chosen.append(j)
            extend(j + 2, chosen)
            chosen.pop()

    extend(1, [])
    return tuple(sorted(out, key=lambda m: (len(m), m)))


def enumerate_matchings(p: int) -> dict[int, list[tuple[int, ...]]]:
    """All matchings of the path on ``p`` vertices, grouped by size ``k``."""
    if p < 1:
        raise ValueError("p must be positive")
    grouped: dict[int, list[tuple[int, ...]]] = {k: [] for k in range(p // 2 + 1)}
    for m in _matchings(p):
        grouped[len(m)].append(m)
    return grouped


def matching_counts(p: int) -> dict[int, int]:
    return {k: len(v) for k, v in enumerate_matchings(p).items()}


def _free_vertices(matching: tuple[int, ...], p: int) -> list[int]:
    covered = set()
    for j in matching:
        covered.update((j, j + 1))
    return [m for m in range(1, p + 1) if m not in covered]


@lru_cache(maxsize=None)
def _matching_tables(p: int):
    """Index arrays for vectorised evaluation: (edge lists, free-vertex lists), 0-based."""
    edges, free = [], []
    for m in _matchings(p):
        edges.append(np.array([j - 1 for j in m], dtype=int))
        free.append(np.array([v - 1 for v in _free_vertices(m, p)], dtype=int))
    return edges, free


def det_formula(spec: JacobiSpec, *, max_p: int = FORMULA_MAX_P) -> complex:
    """Determinant as a sum over matchings of the path graph."""
    return complex(det_formula_batch(spec.a[None, :], spec.b[None, :], max_p=max_p)[0])


def det_formula_batch(a: np.ndarray, b: np.ndarray, *, max_p: int = FORMULA_MAX_P,
                      perturb: float = 0.0) -> np.ndarray:
    """Matching-sum determinant for a batch: ``a`` is (n, p), ``b`` is (n, p-1).

    ``perturb`` adds a relative error to the k=1 terms; it exists only so the
    verification suite can prove that its oracle comparison discriminates.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    n, p = a.shape
    if b.shape != (n, max(p - 1, 0)):
        raise LengthMismatch(f"off-diagonal batch must have shape {(n, p - 1)}, got {b.shape}")
    if p > max_p:
        raise ValueError(f"formula path limited to p <= {max_p}; use det_bruteforce")
    if p == 1:
        return a[:, 0].copy()
    weight = -(b * np.conj(b))
    total = np.zeros(n, dtype=complex)
    for e, f in zip(*_matching_tables(p)):
        term = np.prod(weight[:, e], axis=1) * np.prod(a[:, f], axis=1)
        if perturb and e.size == 1:
            term = term * (1.0 + perturb)
        total += term
    return total


def det_recurrence_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Three-term recurrence ``D_k = a_k D_{k-1} - |b_{k-1}|^2 D_{k-2}``, batched."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    d_prev = np.ones(a.shape[0], dtype=complex)
    d = a[:, 0].copy()
    for k in range(1, a.shape[1]):
        d, d_prev = a[:, k] * d - (b[:, k - 1] * np.conj(b[:, k - 1])) * d_prev, d
    return d


def _cofactor_det(m: np.ndarray) -> complex:
    # Laplace expansion along the first row, skipping structural zeros.
    n = m.shape[0]
    if n == 1:
        return complex(m[0, 0])
    total = 0j
    for col in range(n):
        entry = m[0, col]
        if entry == 0:
            continue
        minor = np.delete(np.delete(m, 0, axis=0), col, axis=1)
        sign = -1.0 if col % 2 else 1.0
        total += sign * entry * _cofactor_det(minor)
    return total


def det_bruteforce(spec: JacobiSpec, method: str = "recurrence") -> complex:
    """Reference determinant by the three-term recurrence or by cofactor expansion."""
    if method == "recurrence":
        return complex(det_recurrence_batch(spec.a[None, :], spec.b[None, :])[0])
    if method == "cofactor":
        if spec.p > COFACTOR_MAX_P:
            raise ValueError(f"cofactor expansion limited to p <= {COFACTOR_MAX_P}")
        return _cofactor_det(spec.matrix())
    raise ValueError(f"unknown method {method!r}")


def random_jacobi_batch(rng: np.random.Generator, n: int, p: int) -> tuple[np.ndarray, np.ndarray]:
    a = rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p))
    b = rng.standard_normal((n, p - 1)) + 1j * rng.standard_normal((n, p - 1))
    return a, b


# -- characteristic polynomial of the scaled Floquet matrix ---------------------

def _tridiag_charpoly(values: np.ndarray, lam: float) -> np.ndarray:
    """Coefficients (highest first) of det(zeta - T) for T tridiagonal with
    diagonal ``values`` and off-diagonals ``lam``; empty matrix gives 1."""
    prev = np.array([1.0 + 0j])
    if values.size == 0:
        return prev
    cur = np.array([1.0 + 0j, -values[0]])
    for v in values[1:]:
        nxt = np.polymul([1.0, -v], cur)
        nxt[2:] -= lam**2 * prev
        prev, cur = cur, nxt
    return cur


def _check_z(z: complex) -> complex:
    z = complex(z)
    if z == 0:
        raise ZeroCornerParameter("corner parameter z must be nonzero")
    return z


def charpoly_coeffs(pot: PeriodicPotential, lam: float, z: complex) -> np.ndarray:
    """Monic coefficients (highest degree first) of ``det(zeta I - A~_p(lam, z))``.

    Only ``z + 1/z`` enters, so ``z`` and ``1/z`` give the same polynomial.
    """
    z = _check_z(z)
    v = pot.array
    full = _tridiag_charpoly(v, lam)
    inner = _tridiag_charpoly(v[1:-1], lam)
    coeffs = full.copy()
    coeffs[-inner.size:] -= lam**2 * inner
    coeffs[-1] -= lam**pot.p * (z + 1 / z)
    return coeffs


def _tridiag_det_value(diag: np.ndarray, lam: float) -> complex:
    d_prev, d = 0j, 1.0 + 0j
    for x in diag:
        d, d_prev = x * d - lam**2 * d_prev, d
    return d


def charpoly_eval(pot: PeriodicPotential, lam: float, z: complex, zeta: complex) -> complex:
    """``F(zeta)`` by numeric recurrences, without forming coefficients."""
    z = _check_z(z)
    d = zeta - pot.array.astype(complex)
    return (_tridiag_det_value(d, lam) - lam**2 * _tridiag_det_value(d[1:-1], lam)
            - lam**pot.p * (z + 1 / z))


def unperturbed(pot: PeriodicPotential, zeta: complex) -> complex:
    """``f(zeta) = prod (zeta - V_n)``."""
    return complex(np.prod(zeta - pot.array))


def matching_sum_H(pot: PeriodicPotential, lam: float, zeta: complex) -> complex:
    """Sum over non-empty matchings with weights ``(-1)^k lam^(2k-2)``.

    Together with ``f`` it reproduces the tridiagonal part of ``F``:
    ``det = f + lam^2 H``.
    """
    d = zeta - pot.array.astype(complex)
    total = 0j
    for k, group in enumerate_matchings(pot.p).items():
        if k == 0:
            continue
        coeff = (-1) ** k * lam ** (2 * k - 2)
        for m in group:
            total += coeff * np.prod(d[[v - 1 for v in _free_vertices(m, pot.p)]])
    return total


def _in_domain(pot: PeriodicPotential, lam: float, zeta: complex) -> bool:
    near = np.min(np.abs(zeta - pot.array)) <= pot.gamma / 2 * (1 + 1e-12)
    return bool(0.0 <= lam <= 1.0 and near)


def h_p_eval(pot: PeriodicPotential, lam: float, zeta: complex, *, check_domain: bool = True) -> complex:
    """``h_p(lam, zeta) = H - det(inner tridiagonal block)``."""
    if check_domain and not _in_domain(pot, lam, zeta):
        raise DomainViolation(
            f"(lam={lam}, zeta={zeta}) outside [0,1] x union of disks |zeta - V_j| <= gamma/2")
    d = zeta - pot.array.astype(complex)
    return matching_sum_H(pot, lam, zeta) - _tridiag_det_value(d[1:-1], lam)


@dataclass(frozen=True)
class CharPolySplit:
    lam: float
    z: complex
    zeta: complex
    f: complex
    h_p: complex
    g: complex
    F: complex

    @property
    def split_residual(self) -> float:
        return abs(self.F - self.f - self.g)


def charpoly_split(pot: PeriodicPotential, lam: float, z: complex, zeta: complex) -> CharPolySplit:
    z = _check_z(z)
    f = unperturbed(pot, zeta)
    h = h_p_eval(pot, lam, zeta, check_domain=False)
    g = lam**2 * h - lam**pot.p * (z + 1 / z)
    return CharPolySplit(lam=lam, z=z, zeta=zeta, f=f, h_p=h, g=g,
                         F=charpoly_eval(pot, lam, z, zeta))
