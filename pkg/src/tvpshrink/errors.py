"""Exception hierarchy shared across the package."""


class TvpError(Exception):
    """Base class for all package errors."""


class ParameterError(TvpError, ValueError):
    """Distribution or model parameters outside their valid region."""


class NumericalError(TvpError, ArithmeticError):
    """Numerical breakdown (non-finite covariance, failed factorization...)."""

    def __init__(self, message, index=None, block=None):
        super().__init__(message)
        self.index = index
        self.block = block


class DataError(TvpError, ValueError):
    """Malformed or inconsistent input data."""


class ScheduleError(DataError):
    """Backtest schedule not covered by the data."""


class AlignmentError(DataError):
    """Forecast records that cannot be matched origin by origin."""


class FormatError(TvpError, IOError):
    """Corrupt, truncated or incompatible draw-store file."""


class UndefinedSharpeError(TvpError, ZeroDivisionError):
    """Strategy returns with zero dispersion."""
