"""Exception types raised across the package."""


class WearplanError(Exception):
    """Base class for all package errors."""


class ConfigError(WearplanError, ValueError):
    pass


class NumericalError(WearplanError, ArithmeticError):
    pass


class LengthMismatch(WearplanError, ValueError):
    pass


class NonPositiveWidth(WearplanError, ValueError):
    pass


class DegenerateTangent(NumericalError):
    pass


class DegenerateTip(NumericalError):
    """Raised when the plane offset is zero, so the footprint has no area."""


class InvalidTip(WearplanError, ValueError):
    pass


class RankDeficient(NumericalError):
    pass


class NoContact(WearplanError, ValueError):
    pass


class OutOfBounds(WearplanError, ValueError):
    pass


class EmptyDepths(WearplanError, ValueError):
    pass


class InfeasibleStart(WearplanError, ValueError):
    pass


class CanvasOverflow(WearplanError, ValueError):
    pass


class EmptyMask(WearplanError, ValueError):
    pass
