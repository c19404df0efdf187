"""Exception types shared across the package."""


class RislinkError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(RislinkError, ValueError):
    """A numeric parameter is outside its legal domain."""


class ShapeError(RislinkError, ValueError):
    """An array argument has the wrong length or dimensions."""


class ConfigurationError(RislinkError, ValueError):
    """A scenario, scheme, or experiment configuration is invalid."""


class FormatError(RislinkError, ValueError):
    """A persisted file (model container, CSV) is malformed."""
