"""
Exception hierarchy.

Two families: validation failures (bad inputs, wrong zone, missing data) and
numerical failures (root-finding, integration, LP). The CLI maps them to exit
codes 2 and 3.
"""


class IcuSirError(Exception):
    """Base class for toolkit errors."""


class ValidationFailure(IcuSirError):
    """Input does not meet an operation's preconditions."""


class NumericalFailure(IcuSirError):
    """A numerical procedure could not deliver its guarantee."""


class DomainError(ValidationFailure, ValueError):
    """Argument outside the operation's domain."""


class ConfigError(ValidationFailure):
    """Experiment configuration rejected."""

    def __init__(self, message: str, fields: tuple[str, ...] = ()):
        super().__init__(message)
        self.fields = fields


class ZoneMismatch(ValidationFailure):
    """Requested quantity is undefined in the point's zone."""


class NotDifferentiable(ValidationFailure):
    """Point lies on a curve where W is not differentiable."""


class SingularCorner(ValidationFailure):
    """Outward normal undefined at the corner (sbar, i*)."""


class EmptyCutSet(ValidationFailure):
    """Lower bound requested from a cut set with no cuts."""


class MissingMoment(ValidationFailure):
    """Moment vector lacks an index needed by a constraint."""


class HorizonMismatch(ValidationFailure):
    """Trajectory does not span the requested horizon."""


class NoRootError(NumericalFailure):
    """Bracket does not contain a root or refinement did not converge."""


class StepFailure(NumericalFailure):
    """Integrated state left the simplex."""


class IterationLimit(NumericalFailure):
    """Iterative method exceeded its iteration cap."""


class NoFeasibleScenario(NumericalFailure):
    """Every simulated scenario violated the ICU constraint."""


class CertificateFailure(NumericalFailure):
    """Optimality certificate check failed."""
