"""Exception types raised across the package."""


class AwoisvError(Exception):
    """Base class for all library errors."""


class ExcludedIcr(AwoisvError, ValueError):
    """Steering pose puts the ICR on a wheel line (cot(theta_R) cos(beta_R) = +-M/2)."""


class InvalidLoad(AwoisvError, ValueError):
    pass


class DegenerateWheelSpeed(AwoisvError, ValueError):
    pass


class LowSpeedSingularity(AwoisvError, ValueError):
    pass


class DegeneratePath(AwoisvError, ValueError):
    pass


class ProjectionLost(AwoisvError):
    pass


class OutOfRange(AwoisvError, ValueError):
    pass


class CurvatureTube(AwoisvError, ValueError):
    """Lateral offset pushes 1 - d*kappa below the allowed margin."""


class DimensionMismatch(AwoisvError, ValueError):
    pass


class UnstableClosedLoop(AwoisvError):
    pass


class ContractionViolated(AwoisvError):
    pass


class EmptyTightenedSet(AwoisvError):
    pass


class NoSteadyState(AwoisvError):
    pass


class WindowTooLarge(AwoisvError, ValueError):
    pass


class ConfigError(AwoisvError, ValueError):
    pass


class ControllerHalt(AwoisvError):
    """Raised by the closed loop when the controller cannot continue."""
