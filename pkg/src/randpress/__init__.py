"""Fiber, induced and nonlinear topological pressure of random subshifts of finite type."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BracketFailure,
    ConfigError,
    EnumerationLimit,
    EstimationFailed,
    InsufficientTrajectory,
    InsufficientWord,
    InvalidArgument,
    RandpressError,
    ScanInconclusive,
)
from .model import (  # noqa: E402
    BaseSystem,
    BaseTrajectory,
    Nonlinearity,
    Potential,
    RandomSFT,
    RandomSystem,
    ScalingPotential,
    VectorPotential,
    admissible_words,
    base_trajectory,
    birkhoff_sum,
    bowen_distance,
    count_admissible,
    separation_depth,
)
from .partition import (  # noqa: E402
    InducedTimeData,
    TailTimeData,
    induced_partition,
    induced_time_set,
    linear_partition,
    nonlinear_induced_partition,
    nonlinear_partition,
    tail_partition,
    transfer_partition,
)
from .estimators import (  # noqa: E402
    EstimatorConfig,
    PressureEstimate,
    RootSolveResult,
    critical_exponent_scan,
    fiber_pressure,
    induced_pressure_direct,
    nonlinear_induced_pressure,
    nonlinear_pressure,
    pressure_curve,
    pseudo_inverse_solve,
)
from .measures import (  # noqa: E402
    MixtureMeasure,
    RandomMarkovMeasure,
    VariationalResult,
    equilibrium_gap,
    fiber_entropy,
    integrate,
    optimize_objective,
    stationary_fibers,
    variational_objective,
)
from .verification import (  # noqa: E402
    SuiteReport,
    acceptance_instances,
    run_consistency_suite,
    run_property_suite,
    run_reduction_suite,
)
from .config import RunConfig, parse_config  # noqa: E402
