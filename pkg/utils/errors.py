"""Exception hierarchy shared by every curvlab module."""


class CurvLabError(Exception):
    """Base class for all errors raised by the lab."""


class ExprSyntaxError(CurvLabError):
    """
    Raised when a field expression cannot be parsed.

    Args:
        message (str): What went wrong.
        position (int): 0-based character offset in the source text.
    """

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class DimensionError(CurvLabError):
    """A point, vector or matrix does not match the field dimension."""


class DomainError(CurvLabError):
    """A parameter lies outside the range an operation is defined for."""


class ConfigError(CurvLabError):
    """A run configuration is inconsistent or incomplete."""


class NumericFailure(CurvLabError):
    """A numerical routine produced a result that cannot be trusted."""
