"""sparsehawkes: simulation and three-step sparse estimation for marked
Hawkes processes with exponential-family kernels."""

from .config import (
    ConfigError,
    ElasticNetConfig,
    ExperimentConfig,
    load_config,
    model_to_toml,
    parse_config,
    parse_model,
)
from .experiments import (
    McCell,
    McReport,
    elastic_net_fit,
    export_report,
    fit_method,
    parse_report,
    run_mc,
)
from .layout import CoordinateLayout
from .likelihood import (
    Objective,
    gradient_check,
    layout_of,
    least_squares,
    loglik_mark,
    loglik_point,
)
from .marks import CustomMarks, DirichletMarks, NoMarks, log_mark_density, sample_mark
from .model import (
    ExcitationState,
    MatrixExpKernel,
    ModelError,
    ModelParams,
    ParamBounds,
    ScalarExpKernel,
    StabilityError,
    UnsupportedModelError,
    apply_jump,
    branching_matrix,
    decay_state,
    empty_state,
    intensity,
    matrix_exponential,
    spectral_radius,
    stationary_mean_intensity,
)
from .optimize import BoxProblem, OptimizeError, SolveDiagnostics, elastic_net_ls, maximize_box
from .po import (
    FitResult,
    PoHyper,
    po_estimate,
    qmle_estimate,
    step1_qmle,
    step2_threshold,
    step3_refit,
    threshold_coordinate,
)
from .simulate import (
    EventLog,
    SimulationBudgetError,
    read_events,
    simulate,
    thinning_bound,
    write_events,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
