"""Exception hierarchy shared across the package."""


class KRFError(Exception):
    """Base class for all errors raised by krf."""


class ShapeError(KRFError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(KRFError, ValueError):
    """An input lies outside the domain of an operation (e.g. log of a non-positive value)."""


class DataError(KRFError, ValueError):
    """Malformed or inconsistent input data."""


class GraphParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericError(KRFError, ArithmeticError):
    """A loss or gradient became non-finite."""
