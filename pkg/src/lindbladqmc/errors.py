"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid run configuration (unknown key, bad value, missing section)."""


class SizeCapError(ConfigError):
    """Requested system size exceeds a hard cap (dense reference solvers)."""


class NumericalError(RuntimeError):
    """Numerical failure inside the determinant machinery."""

    def __init__(self, message, log_det=None):
        super().__init__(message)
        self.log_det = log_det


class StabilizationError(NumericalError):
    """Fast-update Green's function drifted past tolerance at a rebuild."""


class EstimatorError(RuntimeError):
    """A ratio estimate cannot be formed (e.g. non-positive factor mean)."""
