"""Information-geometric chaos indicators: Fisher-Rao metrics, curvature,
geodesic spread, the information geometrodynamical entropy and level-spacing
statistics of Ising chains."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    AmbiguousRegimeError, ConfigError, DomainError, DomainExitError, IGChaosError,
    NumericalError, QuadratureError, SingularMetricError, StiffnessError, UnsupportedError,
)
