"""Exception hierarchy shared by every module."""


class HawkesError(Exception):
    """Base class for all package errors."""


class ValidationError(HawkesError, ValueError):
    pass


class ParseError(HawkesError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DomainError(HawkesError, ValueError):
    pass


class FormatError(HawkesError, ValueError):
    pass


class ShapeError(HawkesError, ValueError):
    pass


class ConfigError(HawkesError, ValueError):
    pass


class NumericalError(HawkesError, ArithmeticError):
    """Non-finite objective or gradient; ``iterate`` holds the offending point."""

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate


class SimulationError(HawkesError, RuntimeError):
    pass


class SearchError(HawkesError, RuntimeError):
    pass
