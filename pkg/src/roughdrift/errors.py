"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input outside the domain of an operation (bad interval, dimension mismatch, ...)."""


class ConfigurationError(ValueError):
    """A scenario cannot be set up as requested, e.g. no admissible ``delta``."""


class ExplosionError(ArithmeticError):
    """A solution became non-finite.

    Attributes
    ----------
    time : float
        Time at which the non-finite value was first observed.
    """

    def __init__(self, message, time):
        super().__init__(f"{message} (t={time!r})")
        self.time = time


class StiffnessError(ArithmeticError):
    """The adaptive integrator could not make progress (step size underflow)."""

    def __init__(self, message, time=None):
        super().__init__(message if time is None else f"{message} (t={time!r})")
        self.time = time


class SingularJacobianError(ArithmeticError):
    """The flow Jacobian could not be inverted; indicates a solver or field bug."""
