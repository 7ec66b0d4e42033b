"""Exception hierarchy.

The CLI maps ``ValidationError`` subclasses to exit code 2 and
``NumericalPreconditionError`` subclasses to exit code 3.  Each error carries
a short ``tag`` naming the violated condition.
"""


class LevyObstacleError(Exception):
    tag = "error"

    def __init__(self, message, tag=None):
        super().__init__(message)
        if tag is not None:
            self.tag = tag


class ValidationError(LevyObstacleError):
    tag = "validation"


class ParameterDomainError(ValidationError, ValueError):
    tag = "parameter-domain"


class ConfigError(ValidationError):
    tag = "config"


class UsageError(ValidationError):
    tag = "usage"


class NumericalPreconditionError(LevyObstacleError):
    tag = "numerical-precondition"


class IntegrabilityError(NumericalPreconditionError):
    tag = "integrability"


class StabilityError(NumericalPreconditionError):
    tag = "stability"


class PreconditionError(NumericalPreconditionError):
    tag = "precondition"


class SimulationBlowupError(NumericalPreconditionError):
    tag = "simulation-blowup"


class BasisError(NumericalPreconditionError):
    tag = "regression-basis"


class TruncationError(NumericalPreconditionError):
    tag = "horizon-truncation"


class IterationError(NumericalPreconditionError):
    tag = "projection-iteration"


class FitError(NumericalPreconditionError):
    tag = "holder-fit"
