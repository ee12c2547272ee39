"""Exception types shared across the package."""


class DyrcError(Exception):
    """Base class for all package errors."""


class NonFinite(DyrcError, ArithmeticError):
    """A trajectory or feedback loop produced a non-finite value."""

    def __init__(self, message, *, time=None, step=None):
        super().__init__(message)
        self.time = time
        self.step = step


class TooShort(DyrcError, ValueError):
    pass


class LengthMismatch(DyrcError, ValueError):
    pass


class NonMonotonicTimes(DyrcError, ValueError):
    pass


class SectionTooLong(DyrcError, ValueError):
    pass


class NoConvergence(DyrcError, RuntimeError):
    pass


class ZeroSpectralRadius(DyrcError, ValueError):
    pass


class DimensionMismatch(DyrcError, ValueError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class SingularSystem(DyrcError, ArithmeticError):
    pass


class NotTrained(DyrcError, RuntimeError):
    pass


class EmptyCell(DyrcError, ValueError):
    pass
