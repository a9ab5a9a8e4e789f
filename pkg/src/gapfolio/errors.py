"""Exception hierarchy shared by all gapfolio modules."""


class GapfolioError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(GapfolioError, ValueError):
    """Invalid user input (parameters, grids, configs)."""


class ParameterOrdering(ValidationError):
    """Rates violate ``mu > r2 >= r1``."""


class NonPositive(ValidationError):
    """A quantity that must be strictly positive is not."""


class NumericalError(GapfolioError, ArithmeticError):
    """A numerical procedure failed to produce a trustworthy result."""


class PicardDivergence(NumericalError):
    pass


class GridTooSmall(NumericalError):
    pass


class TailTooFat(NumericalError):
    pass


class MultipleCrossings(NumericalError):
    pass


class BoundaryAtEdge(NumericalError):
    pass


class NegativeVarianceResidual(NumericalError):
    pass


class PolicyEvaluationFailure(NumericalError):
    def __init__(self, message, path_index=None):
        super().__init__(message)
        self.path_index = path_index


class OutOfRange(GapfolioError, ValueError):
    """Evaluation point lies outside the admissible or tabulated domain."""


class NotBracketed(OutOfRange):
    """Dual root lies outside the tabulated grid."""


class CacheCorrupt(GapfolioError, IOError):
    pass
