"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration: bad dimensions, weights, schemas, or option values."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite or otherwise unusable value."""


class NoClosedFormError(ConfigurationError):
    """Closed-form kernel embeddings requested for a model that has none.

    Raised by the Gaussian-kernel embedding helpers for non-Gaussian response
    models; callers should fall back to the Monte Carlo estimator.
    """
