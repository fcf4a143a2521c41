"""Light cones and asymptotic velocities of periodic discrete Schrödinger operators."""

from .model import (
    DEFAULT_RHO0,
    ConstantsLedger,
    Coupling,
    PeriodicPotential,
    alternating_potential,
    constants,
    new_potential,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_RHO0",
    "ConstantsLedger",
    "Coupling",
    "PeriodicPotential",
    "alternating_potential",
    "constants",
    "new_potential",
    "__version__",
]
