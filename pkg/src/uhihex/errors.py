"""Exception hierarchy.

Each family maps onto one CLI exit code, so callers can catch broad
categories without knowing which stage raised.
"""


class UHIError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(UHIError):
    exit_code = 2


class IngestionError(UHIError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class RasterFormatError(IngestionError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GeometryMismatchError(IngestionError):
    pass


class BuildingFormatError(IngestionError):
    pass


class NumericError(UHIError):
    exit_code = 4


class DomainError(NumericError):
    """A value falls outside the domain of a formula."""


class RankDeficiencyError(NumericError):
    def __init__(self, message, columns=()):
        self.columns = list(columns)
        super().__init__(message)


class ConvergenceError(NumericError):
    pass


class ServiceError(UHIError):
    exit_code = 5
