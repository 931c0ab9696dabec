"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters, environment, or run configuration."""


class PreconditionError(ValueError):
    """An operation was called on an input it does not accept."""


class EstimationError(RuntimeError):
    """Not enough usable data to produce an estimate."""
