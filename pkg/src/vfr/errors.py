"""Exception hierarchy shared by every module."""


class VfrError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(VfrError, ValueError):
    pass


class NumericError(VfrError, ArithmeticError):
    """Non-finite values encountered in a forward or backward pass."""


class UsageError(VfrError, RuntimeError):
    pass


class DomainError(VfrError, ValueError):
    """Input outside the domain an operation is defined on."""


class DataError(VfrError):
    """Malformed or missing dataset/checkpoint/image content."""


class ConfigError(VfrError, ValueError):
    pass


class DivergenceError(VfrError):
    """Training loss blew up and stayed up; see the message for the step."""
