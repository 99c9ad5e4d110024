"""Exception types shared across the library."""


class StrategicLabError(Exception):
    """Base class for all library errors."""


class InvalidInputError(StrategicLabError, ValueError):
    """An argument violates an operation's preconditions."""


class ScenarioValidationError(InvalidInputError):
    """A scenario definition violates one of its invariants."""


class UnsupportedScenarioError(StrategicLabError):
    """The scenario is outside the scope an algorithm supports."""


class NumericalError(StrategicLabError):
    """An optimization or decomposition failed to produce finite results."""
