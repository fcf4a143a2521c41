"""Exception hierarchy shared by all modules."""


class PeriodicSchrodingerError(Exception):
    """Base class for every error raised by this package."""


class DegeneratePotential(PeriodicSchrodingerError, ValueError):
    pass


class PeriodTooSmall(PeriodicSchrodingerError, ValueError):
    pass


class InvalidRadius(PeriodicSchrodingerError, ValueError):
    pass


class SublatticeOutOfRange(PeriodicSchrodingerError, ValueError):
    pass


class ZeroHopping(PeriodicSchrodingerError, ValueError):
    pass


class ZeroCornerParameter(PeriodicSchrodingerError, ValueError):
    pass


class CouplingAboveThreshold(PeriodicSchrodingerError, ValueError):
    """lambda exceeds lambda_0; band labeling by nearest V_l is not guaranteed."""


class CouplingBelowThreshold(PeriodicSchrodingerError, ValueError):
    """mu is below mu_0 (the same condition as CouplingAboveThreshold, seen from mu)."""


class DegenerateBands(PeriodicSchrodingerError, ArithmeticError):
    pass


class RootFindingDivergence(PeriodicSchrodingerError, ArithmeticError):
    pass


class AmbiguousLabeling(PeriodicSchrodingerError, ArithmeticError):
    pass


class LengthMismatch(PeriodicSchrodingerError, ValueError):
    pass


class DomainViolation(PeriodicSchrodingerError, ValueError):
    pass


class QuadratureUnresolved(PeriodicSchrodingerError, ArithmeticError):
    pass


class BoundarySpill(PeriodicSchrodingerError, RuntimeError):
    """Amplitude reached the edge of the truncated lattice."""


class MethodUnavailable(PeriodicSchrodingerError, ValueError):
    pass


class NotConverged(PeriodicSchrodingerError, RuntimeError):
    def __init__(self, message, drift=None):
        super().__init__(message)
        self.drift = drift


class ThresholdNeverCrossed(PeriodicSchrodingerError, RuntimeError):
    pass


class InsufficientSamples(PeriodicSchrodingerError, ValueError):
    pass


class ConfigError(PeriodicSchrodingerError, ValueError):
    pass
