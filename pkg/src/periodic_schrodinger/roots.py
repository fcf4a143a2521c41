"""Simultaneous polynomial root finding (Aberth-Ehrlich iteration)."""

from __future__ import annotations

import numpy as np

from .errors import RootFindingDivergence


def backward_error(coeffs: np.ndarray, roots: np.ndarray) -> np.ndarray:
    """``|P(r)| / sum_i |c_i| |r|^i`` for each root ``r``."""
    coeffs = np.asarray(coeffs, dtype=complex)
    scale = np.polyval(np.abs(coeffs), np.abs(roots))
    return np.abs(np.polyval(coeffs, roots)) / scale


def aberth_roots(coeffs, seeds, *, tol: float = 1e-14, max_iter: int = 200) -> np.ndarray:
    """All roots of the polynomial ``coeffs`` (highest degree first).

    ``seeds`` must hold one starting point per root and should be pairwise
    distinct; seeding close to the true roots gives quadratic-to-cubic
    convergence from the first step.
    """
    c = np.asarray(coeffs, dtype=complex)
    c = c / c[0]
    dc = np.polyder(c)
    z = np.array(seeds, dtype=complex)
    n = c.size - 1
    if z.size != n:
        raise ValueError(f"need {n} seeds, got {z.size}")
    if n == 0:
        return z
    eye = np.eye(n, dtype=bool)
    for _ in range(max_iter):
        val = np.polyval(c, z)
        der = np.polyval(dc, z)
        active = backward_error(c, z) > tol
        if not active.any():
            return z
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = val / der
            diff = z[:, None] - z[None, :]
            diff[eye] = 1.0
            inv = 1.0 / diff
            inv[eye] = 0.0
            step = ratio / (1.0 - ratio * inv.sum(axis=1))
        step = np.where(np.isfinite(step), step, 0.0)
        z = np.where(active, z - step, z)
    err = backward_error(c, z)
    if np.max(err) > 1e3 * tol:
        raise RootFindingDivergence(
            f"Aberth iteration did not converge in {max_iter} steps; worst backward error {np.max(err):.3e}")
    return z
