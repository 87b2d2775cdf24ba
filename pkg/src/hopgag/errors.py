"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class HopgagError(Exception):
    """Base class for all library errors."""


class InvalidInputError(HopgagError, ValueError):
    """Malformed, non-finite or mis-shaped input (CLI exit code 1)."""


class DomainError(InvalidInputError):
    """A parameter lies outside its mathematical domain, e.g. alpha > 2."""


class NumericalError(HopgagError, ArithmeticError):
    """A numerical routine failed to produce a trustworthy result (CLI exit code 2)."""


class BisectionError(NumericalError):
    def __init__(self, message, bracket_width):
        super().__init__(f"{message} (last bracket width {bracket_width:.3e})")
        self.bracket_width = bracket_width


class DivergenceError(NumericalError):
    """Raised when an iteration produces a non-finite state.

    ``trace`` holds the iterations recorded before the failure.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
