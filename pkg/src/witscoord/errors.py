"""Exception types shared across the package."""


class WitsError(ValueError):
    """Base class for argument and data errors raised by this package."""


class InvalidGridError(WitsError):
    pass


class InvalidPmfError(WitsError):
    pass


class SchemaError(WitsError):
    """Axis labels or tensor shapes do not match what an operation needs."""


class ConfigError(WitsError):
    pass
