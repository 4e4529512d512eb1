"""Exception types raised across the package."""


class LatticeDetError(Exception):
    """Base class for all package errors."""


class RankDeficient(LatticeDetError, ValueError):
    pass


class NoConvergence(LatticeDetError, ArithmeticError):
    pass


class UnsupportedOrder(LatticeDetError, ValueError):
    pass


class LengthMismatch(LatticeDetError, ValueError):
    pass


class IndexOutOfRange(LatticeDetError, IndexError):
    pass


class SearchSpaceTooLarge(LatticeDetError, ValueError):
    """Exhaustive enumeration would exceed ``MAX_SEARCH_SPACE`` vectors."""


class ZeroNoise(LatticeDetError, ValueError):
    pass


class EmptyBatch(LatticeDetError, ValueError):
    pass


class InsufficientData(LatticeDetError, ValueError):
    """A BER point is zero or has too few error events to fit a slope."""


class ConfigError(LatticeDetError, ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
