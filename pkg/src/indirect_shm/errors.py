"""Exception hierarchy shared across the package."""


class ShmError(Exception):
    """Base class for all package errors."""


class IoError(ShmError, OSError):
    """Missing or unreadable input files."""


class FormatError(ShmError, ValueError):
    """Input file violates the expected schema."""

    def __init__(self, message, run_id=None):
        super().__init__(message)
        self.run_id = run_id


class ParamError(ShmError, ValueError):
    pass


class ShapeError(ShmError, ValueError):
    pass


class DataError(ShmError, ValueError):
    pass


class TrainError(ShmError, RuntimeError):
    pass


class NumericError(ShmError, ArithmeticError):
    pass


class NoDataError(ShmError, ValueError):
    pass


class ConfigError(ShmError, ValueError):
    pass


class ConvergenceWarning(UserWarning):
    """Iterative solver stopped at its iteration cap."""
