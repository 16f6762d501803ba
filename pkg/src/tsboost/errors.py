"""Exception hierarchy shared by every tsboost module."""


class TransshipmentError(Exception):
    """Base class for all errors raised by tsboost."""


class DimensionMismatch(TransshipmentError, ValueError):
    pass


class ImproperDemand(TransshipmentError, ValueError):
    """Demand entries do not sum to zero."""


class NonpositiveWeight(TransshipmentError, ValueError):
    pass


class SelfLoop(TransshipmentError, ValueError):
    pass


class DisconnectedGraph(TransshipmentError):
    pass


class DisconnectedDemand(TransshipmentError):
    """Some connected component carries a nonzero net demand."""


class NotSpanning(TransshipmentError, ValueError):
    pass


class EmptyVector(TransshipmentError, ValueError):
    pass


class WidthViolation(TransshipmentError):
    """An oracle response exceeded the declared MW width."""


class PreconditionerContractViolation(TransshipmentError):
    """A preconditioner output failed a spot-check of its guarantees."""


class NonPositiveGuess(TransshipmentError, ValueError):
    pass


class DegenerateEmbedding(TransshipmentError, ValueError):
    pass


class CertificateUnbounded(TransshipmentError):
    pass


class ParseError(TransshipmentError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InfeasibleShape(TransshipmentError, ValueError):
    pass
