"""Exception hierarchy shared across lapkit modules."""


class LapkitError(Exception):
    """Base class for all lapkit errors."""


class DegenerateTip(LapkitError):
    """Tip coincides with the pivot point; shaft direction is undefined."""


class InvalidAction(LapkitError):
    """Action component outside [-1, 1] or non-finite."""


class UnstableSimulation(LapkitError):
    """A particle position became non-finite or exceeded the speed ceiling."""


class CoincidentParticles(LapkitError):
    """Two constrained particles are closer than the resolvable minimum."""


class InvalidConfig(LapkitError):
    """Environment configuration failed validation."""


class NotReset(LapkitError):
    """step() called before reset()."""


class ActionShapeMismatch(LapkitError):
    """Action does not match the environment's action space."""


class MissingFeature(LapkitError):
    """Reward spec references a feature absent from the feature map."""


class IndexOutOfRange(LapkitError):
    """Discrete action index outside the valid range."""


class UnknownEnv(LapkitError):
    """Environment id not in the shipped set."""


class UnsupportedEnv(LapkitError):
    """Operation not available for this environment."""


class BehindCamera(LapkitError):
    """Point lies at or behind the camera's near plane."""


class ResolutionMismatch(LapkitError):
    """Frame buffer resolution does not match the camera."""


class StartInCollision(LapkitError):
    """Planning start configuration is in collision."""


class PlanNotFound(LapkitError):
    """Planner exhausted its iteration budget without reaching the goal."""


class CallbackFailure(LapkitError):
    """A recording callback raised; recording aborted cleanly."""

    def __init__(self, name, cause):
        super().__init__(f"callback {name!r} failed: {cause}")
        self.name = name
        self.cause = cause


class Corrupt(LapkitError):
    """Trajectory file failed to parse."""

    def __init__(self, line_number, message):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class VersionMismatch(LapkitError):
    """Trajectory file written by an unsupported format version."""


class BindFailure(LapkitError):
    """Server address could not be bound."""
