"""Exception hierarchy shared by all dimerlab modules."""


class DimerError(Exception):
    """Base class for domain errors raised by dimerlab."""


class InvalidGraph(DimerError):
    pass


class EmptyPatch(DimerError):
    pass


class TooLarge(DimerError):
    pass


class NoCover(DimerError):
    pass


class InconsistentChain(DimerError):
    pass


class NotRegular(DimerError):
    pass


class BoundaryEdge(DimerError):
    pass


class NotGeneralPosition(DimerError):
    def __init__(self, condition, detail=""):
        self.condition = condition
        super().__init__(f"curve not in general position ({condition}): {detail}")


class NotExtendable(DimerError):
    def __init__(self, msg, pair=None):
        self.pair = pair
        super().__init__(msg)


class QuadratureFailure(DimerError):
    pass


class OutsidePolygon(DimerError):
    pass


class InfeasibleField(DimerError):
    pass


class NonConvergence(DimerError):
    def __init__(self, msg, best=None, residual=None):
        self.best = best
        self.residual = residual
        super().__init__(msg)


class GridMismatch(DimerError):
    pass


class MalformedInput(DimerError):
    pass
