class StochKinError(Exception):
    """Base class for errors raised by stochkin."""


class NegativeStateError(StochKinError, ValueError):
    """A hazard was evaluated at a state with a negative component."""


class NonFiniteHazardError(StochKinError, ArithmeticError):
    """A hazard evaluated to NaN or infinity."""


class HazardBoundError(StochKinError):
    """The thinning upper bound was exceeded by the true total hazard."""


class FactorizationError(StochKinError, ArithmeticError):
    """A Cholesky factorisation failed even after jitter escalation."""


class IntegrationError(StochKinError):
    """The moment ODE solver gave up before reaching the end of an interval."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ConfigurationError(StochKinError, ValueError):
    """A run config or model spec failed validation."""


class DataError(StochKinError, ValueError):
    """Observations are inconsistent with the observation model."""
