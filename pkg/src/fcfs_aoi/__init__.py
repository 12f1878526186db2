"""Average Age of Information in a multi-source single-server FCFS queue."""
from .analytic import (
    QueueConfig,
    aoi_approx,
    aoi_approx1,
    aoi_approx2,
    aoi_approx3,
    aoi_single_source_mg1,
    laplace_system_time,
    mean_delay,
    mean_wait,
    p_brief,
    p_long,
)
from .distributions import Exponential, Gamma, HyperExponential, LogNormal, Pareto, from_config
from .errors import (
    AoiError,
    ConfigError,
    GridMismatch,
    InfiniteMoment,
    NoDeliveries,
    NotExponential,
    QuadratureFailure,
    TruncationFailure,
    Unstable,
)
from .sim import SimSpec, simulate, simulate_conditional_moments
from .transient import PsiParams, Truncation, aoi_exact_mm1, psi, transient_prob

__version__ = "0.1.0"
