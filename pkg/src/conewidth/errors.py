"""Exception types shared across the package."""


class InvalidDimensionError(ValueError):
    """A dimension argument is out of range (e.g. n < 2, not a power of two)."""


class InvalidRankError(ValueError):
    """A rank argument is outside [1, min(p, n)]."""


class InvalidParameterError(ValueError):
    """A numeric parameter violates its precondition."""


class InfeasibleSupportError(RuntimeError):
    """Support resampling hit the redraw cap without a usable support."""


class ModeInfeasibleError(RuntimeError):
    """The requested signal construction is impossible for this operator."""


class DegenerateSignalError(ValueError):
    """The signal is zero (or has no resolvable support)."""


class DegenerateZ0Error(RuntimeError):
    """The orthogonality point z0 is numerically zero."""


class NotGeneralPositionError(RuntimeError):
    """Rows indexed by the cosupport are linearly dependent."""


class InfeasibleDataError(ValueError):
    """Measurements y are inconsistent with the measurement matrix."""


class NonConvergenceError(RuntimeError):
    """An iterative solve exhausted its iteration budget."""


class ConfigError(ValueError):
    """A run configuration is missing or has invalid fields."""

    def __init__(self, message, fields=()):
        super().__init__(message)
        self.fields = tuple(fields)
