"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class RescurveError(Exception):
    """Base class for all package errors."""


class ConfigError(RescurveError):
    """Invalid parameters or configuration (CLI exit code 2)."""


class DataError(RescurveError):
    """Input data that cannot produce a usable result (CLI exit code 3)."""


class DomainError(RescurveError, ValueError):
    """Argument outside the mathematical domain of an operation."""
