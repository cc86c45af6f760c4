"""Exception hierarchy shared by every module of the package."""


class CpaError(Exception):
    """Base class for all errors raised by ``cpa``."""


# numerics
class DuplicateNodes(CpaError):
    pass


class NoConvergence(CpaError):
    pass


class DegenerateLeading(CpaError):
    pass


class ZeroDivisor(CpaError):
    pass


class TooLarge(CpaError):
    pass


# scheme
class InvalidParams(CpaError, ValueError):
    pass


class NoConstraints(CpaError):
    """C <= 0: the individual-decoding regime, nothing to orthogonalize against."""


class InfeasibleCgeK(CpaError):
    pass


class InfeasibleTrivialKernel(CpaError):
    pass


class GenericityExhausted(CpaError):
    pass


class NotInKernel(CpaError):
    pass


class DisjointnessViolated(CpaError):
    pass


class RepeatedRoots(CpaError):
    pass


class InvalidRegime(CpaError):
    pass


# pipeline
class DimensionMismatch(CpaError, ValueError):
    pass


class MissingResponses(CpaError):
    pass


class SchemeNotValidated(CpaError):
    pass


class InsufficientResponses(CpaError):
    pass


class NonScalarData(CpaError):
    pass


# simulator
class WorkerLoss(MissingResponses):
    pass
