"""Exception types raised by the package."""


class CBError(Exception):
    """Base class for all domain errors."""


class OutOfRangeProbability(CBError, ValueError):
    pass


class InvalidTarget(CBError, ValueError):
    pass


class NotAdjacent(CBError, ValueError):
    pass


class NotAdjacentOrDiagonal(CBError, ValueError):
    pass


class DegenerateSupport(CBError, ValueError):
    pass


class NumericalUnderflow(CBError, ArithmeticError):
    pass


class NTooSmall(CBError, ValueError):
    pass


class InvalidBranchProbability(CBError, ValueError):
    pass


class CensoredData(CBError, ValueError):
    pass


class NotReached(CBError, ValueError):
    pass


class EmptyClass(CBError, ValueError):
    pass


class TooLarge(CBError, ValueError):
    pass
