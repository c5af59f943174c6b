"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value violates a documented constraint."""


class ParseError(ValueError):
    """An input file is malformed; the message names the offending location."""


class InsufficientNoiseError(RuntimeError):
    """Every accountant order yields an infinite epsilon."""


class CalibrationError(RuntimeError):
    """The requested privacy target is unreachable in the search range."""
