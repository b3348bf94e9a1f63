"""Exception hierarchy shared by every module."""


class QFCusumError(Exception):
    """Base class for all package errors."""


class DataError(QFCusumError, ValueError):
    """Input data is malformed or unusable."""


class ParseError(DataError):
    """A CSV file could not be parsed.

    ``line`` is 1-based, ``column`` is 1-based when known.
    """

    def __init__(self, message, path=None, line=None, column=None):
        loc = []
        if path is not None:
            loc.append(str(path))
        if line is not None:
            loc.append(f"line {line}")
        if column is not None:
            loc.append(f"column {column}")
        prefix = ", ".join(loc)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.path = path
        self.line = line
        self.column = column


class InsufficientDataError(DataError):
    pass


class DomainError(QFCusumError, ValueError):
    """An argument lies outside the domain of an operation."""


class NumericError(QFCusumError, ArithmeticError):
    """A computation produced a non-finite or degenerate value."""


class DegeneratePathError(NumericError):
    pass


class DegenerateVarianceError(NumericError):
    pass


class UnsupportedDiagnosticError(QFCusumError, NotImplementedError):
    pass


class ExperimentError(QFCusumError, RuntimeError):
    """Too many replicates of a scenario failed."""
