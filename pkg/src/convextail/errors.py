class ConvexTailError(Exception):
    """Base class for package errors."""


class ParameterError(ConvexTailError, ValueError):
    pass


class CalibrationMismatchError(ConvexTailError):
    """A moment measure does not reproduce the calibrated moments."""


class AssumptionViolationError(ConvexTailError):
    """Objective is unbounded, negative, or not quasi-concave about its mode."""


class InfeasibleError(ConvexTailError):
    """No convex tail matches the parameters (``eta**2 > 2 * beta * nu``)."""


class ThresholdInvalidError(ConvexTailError):
    """Estimated density is not decreasing at the threshold."""


class FitFailureError(ConvexTailError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class RejectionBudgetError(ConvexTailError):
    pass
