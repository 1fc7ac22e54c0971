"""Exception types raised by fcpd."""


class FcpdError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(FcpdError, ValueError):
    """Shapes, ranks, rules or options are inconsistent."""


class DegenerateComponentError(FcpdError, ArithmeticError):
    """A component collapsed to zero (zero column, zero tensor)."""

    def __init__(self, message, *, mode=None, component=None):
        super().__init__(message)
        self.mode = mode
        self.component = component


class SingularConfigurationError(FcpdError, ArithmeticError):
    """A closed-form bound is evaluated where its denominator vanishes."""

    def __init__(self, message, *, mode=None):
        super().__init__(message)
        self.mode = mode


class NumericError(FcpdError, ArithmeticError):
    """A numerical kernel (SVD, solve) failed."""


class InvalidStateError(FcpdError, RuntimeError):
    """An operation needs artifacts that were not recorded."""
