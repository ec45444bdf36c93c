"""Exception hierarchy shared by every module of the toolkit."""


class IGChaosError(Exception):
    """Base class for all toolkit errors."""


class DomainError(IGChaosError, ValueError):
    """Parameters or coordinates outside the declared domain of a family or chart."""


class UnsupportedError(IGChaosError, NotImplementedError):
    """Operation not available for the given family, field or argument."""


class NumericalError(IGChaosError, ArithmeticError):
    """A numerical procedure failed to produce a trustworthy result."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not converge or the integral diverged."""

    def __init__(self, message, achieved_error=None):
        super().__init__(message)
        self.achieved_error = achieved_error


class SingularMetricError(NumericalError):
    """Metric (or reparametrization Jacobian) is singular or indefinite."""


class DomainExitError(NumericalError):
    """Trajectory left the metric domain; ``last_tau`` is the last valid parameter."""

    def __init__(self, message, last_tau, trajectory=None):
        super().__init__(message)
        self.last_tau = last_tau
        self.trajectory = trajectory


class StiffnessError(NumericalError):
    """Integrator step size underflowed."""


class AmbiguousRegimeError(IGChaosError):
    """Linear and logarithmic growth fits are too close to call."""

    def __init__(self, message, margin):
        super().__init__(message)
        self.margin = margin


class ConfigError(IGChaosError, ValueError):
    """Invalid run configuration."""
