"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: data/format problems exit 2,
numerical problems exit 3.
"""


class LatvarError(Exception):
    """Base class for all package errors."""


class DataError(LatvarError, ValueError):
    """Input data is malformed or violates a precondition."""


class TraceFormatError(DataError):
    def __init__(self, message: str, line: int | None = None, column: str | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyTraceError(DataError):
    pass


class ConfigError(DataError):
    pass


class NumericalError(LatvarError, ArithmeticError):
    """A computation is mathematically undefined for the given inputs."""


class SingularFitError(NumericalError):
    pass


class InsufficientDataError(NumericalError):
    pass


class UndefinedCorrelationError(NumericalError):
    pass
