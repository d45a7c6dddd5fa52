"""Exception types shared across the package."""

from __future__ import annotations


class DecoyPlanError(Exception):
    """Base class for all package-specific errors."""


class OutOfBounds(DecoyPlanError):
    """A move would leave the walkable region of the grid."""


class ObstacleHit(DecoyPlanError):
    """A move would enter an obstacle cell while strict exclusion is on."""


class EmptyCandidateSet(DecoyPlanError):
    """No feasible action sequence exists from the given state."""


class AllInfinite(DecoyPlanError):
    """Every candidate cost is infinite; no distribution can be formed."""


class DimensionMismatch(DecoyPlanError):
    """Cost matrix shape does not agree with the rationality vector."""


class SizeLimitExceeded(DecoyPlanError):
    """Joint candidate enumeration would exceed the configured cap."""


class NoFeasibleJoint(DecoyPlanError):
    """Budget pruning removed every joint candidate.

    Carries the partial team run (if any) on the ``run`` attribute.
    """

    def __init__(self, message: str, run=None):
        super().__init__(message)
        self.run = run


class StepCapExceeded(DecoyPlanError):
    """An episode hit its step cap before reaching the goal.

    Carries the partial log on the ``log`` attribute (single agent) or
    the partial run on ``run`` (team).
    """

    def __init__(self, message: str, log=None, run=None):
        super().__init__(message)
        self.log = log
        self.run = run


class UnknownKind(DecoyPlanError):
    """Coupling kind is not built in and no custom handler is registered."""


class UnknownPreset(DecoyPlanError):
    """Scenario preset name is not in the registry."""


class OutOfRange(DecoyPlanError):
    """A scalar argument lies outside its documented domain."""


class TooShort(DecoyPlanError):
    """A trajectory has too few usable steps for the requested metric."""


class ParseError(DecoyPlanError):
    """A run configuration file is malformed.

    ``field`` names the offending key where one can be identified.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field
