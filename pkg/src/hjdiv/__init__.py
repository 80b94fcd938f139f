"""Hamilton principal functions as potential functions for statistical models."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .geometry import (
    StatisticalModel,
    TwoPointFunction,
    builtin_model,
    christoffel_at,
    geodesic_distance,
    kl_divergence_exponential,
    load_model,
    metric_at,
    skewness_at,
    validate_model,
)
from .kernels import DEFAULT_BACKEND, NATIVE_AVAILABLE
from .lagrangian import LagrangianSpec, Trajectory, el_acceleration, energy, integrate, lagrangian_eval
from .quantum import (
    bloch_to_chart,
    bloch_to_density,
    chart_to_bloch,
    commutator_generator,
    conjugation_action,
    conjugation_geodesic,
    fubini_divergence,
    trace_lagrangian,
)
from .recovery import principal_two_point, recover_metric, recover_skewness
from .solver import ShootingOptions, principal_function, s_grid, shoot
