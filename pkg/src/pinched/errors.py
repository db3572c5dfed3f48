"""Exception hierarchy shared by all modules."""


class PinchedError(Exception):
    """Base class for every error raised by this package."""


class DegenerateExpansion(PinchedError, ArithmeticError):
    """Continued fraction terminated early: the value is rational at working precision."""


class PrecisionExhausted(PinchedError, ArithmeticError):
    pass


class NoFit(PinchedError, ValueError):
    pass


class CapExceeded(PinchedError, RuntimeError):
    pass


class OutOfRange(PinchedError, ValueError):
    pass


class NotDifferentiable(PinchedError, ValueError):
    pass


class NotConverged(PinchedError, RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class GridTooCoarse(PinchedError, ValueError):
    pass


class NonInvariantGraph(PinchedError, ValueError):
    pass


class DivergentIntegral(PinchedError, ArithmeticError):
    pass


class LogGNotIntegrable(PinchedError, ArithmeticError):
    pass


class NoContraction(PinchedError, ValueError):
    pass


class DepthInsufficient(PinchedError, ValueError):
    pass


class LadderInconsistent(PinchedError, ValueError):
    pass


class VariantPreconditionFailed(PinchedError, ValueError):
    def __init__(self, clause, message=None):
        super().__init__(message or clause)
        self.clause = clause
