"""Exception hierarchy shared by every module of the package."""


class HybridHJError(Exception):
    """Base class for all errors raised by hybridhj."""


class NonFiniteDerivative(HybridHJError):
    pass


class NonFiniteState(HybridHJError):
    pass


class ConstraintViolation(HybridHJError):
    pass


class SingularMultiplierSystem(HybridHJError):
    pass


class ChartSingularity(HybridHJError):
    pass


class StepUnderflow(HybridHJError):
    pass


class BracketLost(HybridHJError):
    pass


class ResetOffConstraint(HybridHJError):
    """An impact map sent a constrained state off the momentum codistribution."""


class RegionViolation(HybridHJError):
    pass


class RegionAmbiguous(HybridHJError):
    pass


class TransferUndefined(HybridHJError):
    """The parameter transfer across an impact has no solution."""


class IncomparableHorizons(HybridHJError):
    pass


class BadParameters(HybridHJError, ValueError):
    pass


class ConfigError(HybridHJError, ValueError):
    pass
