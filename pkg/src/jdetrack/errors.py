"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the domain of an operation."""


class NumericalError(ArithmeticError):
    """A numerical routine hit a degenerate configuration."""


class UsageError(RuntimeError):
    """An API was called out of its contract (ordering, size bounds)."""


class FormatError(ValueError):
    """A file or row could not be parsed.

    ``line`` is the 1-based line number when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
