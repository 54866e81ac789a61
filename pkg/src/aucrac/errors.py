"""Exception types shared across the package."""


class AucracError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(AucracError):
    """Invalid configuration value. `field` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class SchemaError(ConfigError):
    """Config document shape is wrong: unknown, missing, or mistyped key."""


class UnknownEnumError(ConfigError):
    """A config field holds a value outside its allowed set."""


class ConstraintError(ConfigError):
    """A numeric invariant on a config or domain value is violated."""


class InputError(AucracError, ValueError):
    """An operation was called with arguments outside its contract."""


class InfeasibleError(AucracError):
    """The requested computation has no feasible answer."""


class DivergenceError(AucracError):
    """Iterative optimization produced a non-finite value."""


class StateError(AucracError):
    """An entity was driven through an illegal state transition."""


class PlacementRejected(AucracError):
    """A container commit failed against current node state; caller should requeue."""
