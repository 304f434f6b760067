"""Exception types raised across the package."""


class EsnError(Exception):
    """Base class for all package errors."""


class ZeroSpectralRadius(EsnError, ValueError):
    pass


class LengthMismatch(EsnError, ValueError):
    pass


class DimensionMismatch(EsnError, ValueError):
    pass


class NonFinite(EsnError, ValueError):
    pass


class InsufficientPositiveEigenvalues(EsnError, ValueError):
    pass


class SolverNotConverged(EsnError, RuntimeError):
    """Raised by the SVR solver when the iteration cap is hit.

    ``violation`` holds the final maximal KKT violation.
    """

    def __init__(self, message: str, violation: float):
        super().__init__(message)
        self.violation = violation


class NoZeroCrossing(EsnError, ValueError):
    pass


class SegmentTooShort(EsnError, ValueError):
    pass


class ZeroVarianceTarget(EsnError, ValueError):
    pass


class SeriesTooShort(EsnError, ValueError):
    pass


class InsufficientPairs(EsnError, ValueError):
    pass


class NoScalingRegion(EsnError, ValueError):
    pass


class NoNeighbors(EsnError, ValueError):
    pass


class ConfigError(EsnError, ValueError):
    pass


class RankDeficientWarning(UserWarning):
    pass


class NoConvergenceWarning(UserWarning):
    pass
