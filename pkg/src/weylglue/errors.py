"""Exception and warning types raised across the package."""


class WeylGlueError(Exception):
    """Base class for every error raised by weylglue."""


class SymmetryViolationError(WeylGlueError, ValueError):
    """An input tensor lacks a required index symmetry."""


class SingularMetricError(WeylGlueError, ValueError):
    """A metric is not positive definite or not invertible."""


class NotWeylError(WeylGlueError, ValueError):
    """A curvature operator couples the self-dual and anti-self-dual parts."""


class InvalidFrameError(WeylGlueError, ValueError):
    """A frame matrix is not a proper rotation."""


class DivergenceError(WeylGlueError, ValueError):
    """A lattice sum was requested for a dilation factor t <= 1."""


class PoleError(WeylGlueError, ValueError):
    """Evaluation at (or numerically on top of) a pole."""


class DomainError(WeylGlueError, ValueError):
    """A point or parameter lies outside the region where a formula applies."""


class CapabilityError(WeylGlueError, TypeError):
    """The requested method cannot handle this kind of input."""


class AccuracyError(WeylGlueError, ArithmeticError):
    """A numerical procedure failed to reach its accuracy target."""


class ConfigurationError(WeylGlueError, ValueError):
    """Inconsistent or malformed run configuration."""


class ConsistencyError(WeylGlueError, ArithmeticError):
    """Two independent computations of one quantity disagree."""


class InputMismatchError(WeylGlueError, ValueError):
    """Two inputs that must describe the same geometry do not."""


class NearFixedPointWarning(UserWarning):
    """A group element nearly fixes the pole, so its remainder bound blows up."""


class NoDecayWarning(UserWarning):
    """A cutoff annulus is too thin for its energy to be small."""
