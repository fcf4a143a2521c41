"""Periodic potentials, block/site indexing and the closed-form constants.

The operator is ``H_mu = Delta + mu V`` on the integer lattice with a
``p``-periodic potential.  Sites are grouped into blocks of ``p``
consecutive sites; site ``n = p*j + (m - 1)`` is sublattice ``m`` of block
``j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DegeneratePotential,
    InvalidRadius,
    PeriodTooSmall,
    SublatticeOutOfRange,
    ZeroHopping,
)

DEFAULT_RHO0 = 1.2


@dataclass(frozen=True)
class PeriodicPotential:
    """One period ``V_1..V_p`` of a non-degenerate periodic potential.

    ``gamma`` is the smallest and ``Gamma`` the largest pairwise distance
    between values in one period.
    """

    values: tuple[float, ...]
    gamma: float = field(init=False)
    Gamma: float = field(init=False)

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 2:
            raise PeriodTooSmall(f"period must be >= 2, got {len(vals)}")
        diffs = [abs(a - b) for i, a in enumerate(vals) for b in vals[i + 1:]]
        gamma = min(diffs)
        if gamma == 0.0:
            raise DegeneratePotential(f"potential values are not distinct: {vals}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "Gamma", max(diffs))

    @property
    def p(self) -> int:
        return len(self.values)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def at_site(self, n):
        """Potential at site(s) ``n`` of the full lattice (periodic extension)."""
        return self.array[np.mod(n, self.p)]


def new_potential(values: Sequence[float]) -> PeriodicPotential:
    return PeriodicPotential(tuple(values))


def alternating_potential() -> PeriodicPotential:
    """``V_n = (-1)^n`` written in block convention: ``V_1 = +1, V_2 = -1``."""
    return PeriodicPotential((1.0, -1.0))


@dataclass(frozen=True)
class Coupling:
    """Potential strength ``mu`` with ``lam = 1/mu``.

    ``alpha`` and ``beta`` describe the general ``alpha*Delta + beta*V`` form
    when it is in use.
    """

    mu: float
    alpha: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.alpha == 0 or self.beta == 0:
            raise ZeroHopping("alpha and beta must be nonzero")

    @property
    def lam(self) -> float:
        return 1.0 / self.mu


def rescale_coupling(alpha: float, mu: float) -> tuple[float, float]:
    """Map ``alpha*Delta + mu*V`` onto ``H_{mu'}`` with a time-scale factor.

    Returns ``(mu', factor)`` with ``mu' = mu/|alpha|`` and ``factor = |alpha|``:
    evolving under ``alpha*Delta + mu*V`` for time ``t`` equals evolving under
    ``H_{mu'}`` for time ``factor*t``.  For ``alpha < 0`` the equality holds
    up to the gauge ``psi(n) -> (-1)^n psi(n)``, which flips the sign of the
    Laplacian and leaves ``|psi(n)|^2`` untouched.
    """
    if alpha == 0:
        raise ZeroHopping("hopping amplitude alpha must be nonzero")
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    scale = abs(alpha)
    return mu / scale, scale


def site_index(j: int, m: int, p: int) -> int:
    """Site number of sublattice ``m`` (1-based) in block ``j``."""
    if not 1 <= m <= p:
        raise SublatticeOutOfRange(f"sublattice index {m} not in 1..{p}")
    return p * j + (m - 1)


def block_of_site(n: int, p: int) -> tuple[int, int]:
    """Inverse of :func:`site_index`: returns ``(j, m)``."""
    j, r = divmod(n, p)
    return j, r + 1


@dataclass(frozen=True)
class ConstantsLedger:
    p: int
    gamma: float
    Gamma: float
    rho0: float
    eta0: float
    C: float
    C_hat: float
    lambda0: float
    mu0: float
    C2: float
    C3: float

    def gamma0(self, lam: float) -> float:
        """Radius of the disk around ``V_l`` holding the ``l``-th eigenvalue."""
        return lam**2 * self.C_hat / (self.gamma / 2) ** (self.p - 1)

    def v_lr(self, mu: float) -> float:
        """Light-cone velocity ``C2/mu`` in blocks per unit time."""
        return self.C2 / mu

    def v_asy_bound(self, mu: float) -> float:
        return self.C3 / mu ** (self.p - 1)

    def as_dict(self) -> dict:
        return {
            "p": self.p,
            "gamma": self.gamma,
            "Gamma": self.Gamma,
            "rho0": self.rho0,
            "eta0": self.eta0,
            "C": self.C,
            "C_hat": self.C_hat,
            "lambda0": self.lambda0,
            "mu0": self.mu0,
            "gamma0_at_lambda0": self.gamma0(self.lambda0),
            "C2": self.C2,
            "C3": self.C3,
        }


def h_p_bound(p: int, gamma: float, Gamma: float) -> float:
    """Uniform bound ``C`` on the correction polynomial ``h_p``."""
    r = Gamma + gamma / 2
    return 2.0**p * r**p + (r + 2.0) ** (p - 2)


def constants(pot: PeriodicPotential, rho0: float = DEFAULT_RHO0) -> ConstantsLedger:
    if not rho0 > 1:
        raise InvalidRadius(f"contour radius rho0 must exceed 1, got {rho0}")
    p, gamma, Gamma = pot.p, pot.gamma, pot.Gamma
    C = h_p_bound(p, gamma, Gamma)
    C_hat = C + 2 * rho0 + 1 / (2 * rho0)
    half_gap_p = (gamma / 2) ** p
    lambda0 = math.sqrt(min(1.0, half_gap_p / (2 * C_hat)))
    # computed independently rather than as 1/lambda0
    mu0 = math.sqrt(max(1.0, 2 * C_hat * (2 / gamma) ** p))
    eta0 = math.log(rho0)
    C2 = C_hat / (eta0 * (gamma / 2) ** (p - 1))
    C3 = 4 * math.pi * p**2 * (2 / gamma) ** (p - 1)
    return ConstantsLedger(
        p=p, gamma=gamma, Gamma=Gamma, rho0=rho0, eta0=eta0, C=C, C_hat=C_hat,
        lambda0=lambda0, mu0=mu0, C2=C2, C3=C3,
    )
