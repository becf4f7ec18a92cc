"""Exception hierarchy for model fitting and evaluation."""


class NpbError(Exception):
    """Base class for package errors."""


class DataError(NpbError):
    """Invalid or degenerate input data."""


class ConvergenceError(NpbError):
    """Optimizer failed to reach the convergence tolerances."""

    def __init__(self, message: str, gradient_norm: float | None = None):
        super().__init__(message)
        self.gradient_norm = gradient_norm


class SingularHessianError(NpbError):
    """Observed information is singular; covariance unavailable."""


class NumericError(NpbError):
    """A likelihood or accuracy computation degenerated numerically."""
