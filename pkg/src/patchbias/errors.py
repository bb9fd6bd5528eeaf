class PatchBiasError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(PatchBiasError, ValueError):
    """Invalid configuration, spec, or argument values."""


class NonFiniteGradientError(PatchBiasError, RuntimeError):
    """A gradient evaluation produced NaN or Inf."""
