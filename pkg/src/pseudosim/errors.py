"""Exception taxonomy for the engine."""


class PseudosimError(Exception):
    """Base class for all engine errors."""


class ParseError(PseudosimError):
    """Document could not be parsed at all."""


class SchemaError(PseudosimError):
    """Document parsed but has missing, extra, or mistyped fields."""


class ValidationError(PseudosimError):
    """A scenario invariant is violated; message names the invariant."""


class OutOfCorridor(PseudosimError):
    """Point is farther than the supported distance from the route."""


class GenerationError(PseudosimError):
    """The privileged driver could not produce a valid expert."""


class RiccatiDivergence(PseudosimError):
    """Riccati fixed-point iteration did not converge."""


class DomainError(PseudosimError):
    """Input outside an operation's mathematical domain."""


class ConfigError(PseudosimError):
    """Inconsistent metric or aggregation configuration."""


class NoLaneError(PseudosimError):
    """No usable lane centerline near the ego."""


class PlannerError(PseudosimError):
    """A planner produced malformed output or crashed."""

    def __init__(self, planner_id: str, message: str):
        super().__init__(f"planner '{planner_id}': {message}")
        self.planner_id = planner_id


class StageError(PseudosimError):
    """A whole evaluation stage failed (e.g. every observation errored)."""


class ProtocolError(PseudosimError):
    """External planner sent a malformed wire message."""


class ExternalTimeout(PseudosimError):
    """External planner did not answer within the request timeout."""


class ExitError(PseudosimError):
    """External planner process died."""


class DegenerateData(PseudosimError):
    """Statistic undefined for the given data (e.g. zero variance)."""


class GridMismatch(PseudosimError):
    """Result files do not cover the same (planner, scenario) grid."""
