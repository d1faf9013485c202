"""fluidarray: sparse fluid-antenna-array design and DOA estimation.

Construct and analyze difference coarrays, compute Fisher information and
Cramér-Rao bounds, optimize continuous antenna positions with a Frank-Wolfe
D-optimal design, and estimate directions of arrival with a two-stage
coarray-MUSIC + local-ML algorithm.
"""

from .design import (
    DesignConfig,
    DesignMeasure,
    DesignResult,
    coarray_refine,
    design_geometry,
    directional_derivative,
    dof_loss_from_spacing,
    extract_positions,
    frank_wolfe_design,
    single_source_optimal,
    spacing_penalized_objective,
    spacing_penalty,
    spacing_penalty_gradient,
)
from .estimation import (
    EstimateResult,
    EstimationConfig,
    adaptive_fas_music,
    coarray_music,
    fas_music,
    local_ml_refine,
    ml_objective,
    music_estimate,
    spatial_smooth,
)
from .estimators import (
    FasMusicEstimator,
    FrankWolfeDesigner,
    MusicEstimator,
)
from .exceptions import (
    DegenerateConfigurationError,
    FluidArrayError,
    InfeasibleSpacingError,
    NoContiguousCoarrayError,
    ResourceLimitError,
    TooManySourcesError,
    UnidentifiableConfigurationError,
    UnsupportedSizeError,
)
from .fisher import (
    FisherInfo,
    crb,
    fim_exact,
    fim_measure,
    fim_single_source,
)
from .harness import (
    ExperimentConfig,
    ResultRow,
    ResultTable,
    default_config,
    experiment_adaptive,
    experiment_crb_vs_D,
    experiment_positions,
    experiment_resolution,
    experiment_rmse_vs_snr,
    experiment_scaling_N,
    load_config,
    monte_carlo_rmse,
    run_experiment,
    save_config,
)
from .geometry import (
    ArrayGeometry,
    DifferenceCoarray,
    coarray_dof,
    difference_coarray,
    dual_dof_bound,
    load_geometry,
    make_coprime,
    make_mra,
    make_nested,
    make_ula,
    mra_exhaustive_search,
    position_moments,
    save_geometry,
)
from .signal import (
    CovarianceEstimate,
    SnapshotData,
    SourceScenario,
    apply_position_error,
    derive_seed,
    load_snapshots,
    model_covariance,
    position_error_snr_loss,
    sample_covariance,
    save_snapshots,
    steering_matrix,
    steering_vector,
    synthesize_snapshots,
    vectorize_covariance,
)

__version__ = "0.1.0"
