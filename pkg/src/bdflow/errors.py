"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration, sampler, or model parameters."""


class NumericError(RuntimeError):
    """A numeric quantity became non-finite or otherwise unusable."""


class ExtinctionError(RuntimeError):
    """The particle population (or total weight) died out."""


class StepSizeError(RuntimeError):
    """A step size (dt or tau) is too large for the requested operation."""


class UnsupportedOperationError(RuntimeError):
    """The operation is not available for this model kind."""


class FitError(RuntimeError):
    """Rate fitting could not be performed on the given records."""
