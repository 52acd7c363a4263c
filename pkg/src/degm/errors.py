"""Exception types shared across the package."""


class ContractError(ValueError):
    """An argument violated a documented precondition."""


class DimensionError(ContractError):
    """Array shapes do not line up."""


class TrainingError(RuntimeError):
    """Optimisation produced an unusable state (NaN gradient, non-finite update)."""


class FormatError(ValueError):
    """A file on disk does not match its declared binary format."""


class ConfigError(ValueError):
    """An experiment configuration is malformed or out of range."""
