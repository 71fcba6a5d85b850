"""Reduced-rank channel estimation and pre-beamformer design for massive MIMO."""

from .array_channel import (
    AngularSector,
    ArrayGeometry,
    ChannelRealization,
    GroupSpec,
    KltBasis,
    MpcSpec,
    SpatialCovariance,
    group_statics,
    klt_basis,
    mpc_covariances,
    sample_group_channels,
    sector_covariance,
    steering_vector,
    truncate_eigenspace,
)
from .beamspace import (
    BeamKind,
    Beamspace,
    ConditioningError,
    CriterionReport,
    Normalization,
    SnrMatrix,
    allocate_dimensions,
    beam_pattern,
    build_dft,
    build_f,
    build_geb,
    generalized_eig,
    snr_matrix,
)
from .estimators import (
    EstimatorKind,
    LinearEstimator,
    Observation,
    correlator_general,
    correlator_rank1,
    derive_clusters,
    full_wiener,
    ls_angle,
    rr_mmse_angle,
    rr_mmse_joint,
    synthesize_observation,
)
from .evaluation import (
    PilotConfig,
    Scenario,
    ScenarioStatistics,
    SweepAxis,
    SweepResult,
    compile_scenario,
    default_scenario,
    error_cov_linear,
    error_cov_mmse,
    identity_checks,
    monte_carlo_mse,
    mse_per_user,
    reference_scenario,
    run_sweep,
    to_db,
    two_group_scenario,
)
from .interference import (
    InterferenceProfile,
    NoiseCovariance,
    interference_covariance,
    spacetime_noise_apply,
)
from .training import (
    PilotSet,
    TrainingMatrices,
    kasami_small_set,
    m_sequence,
    pilot_set,
    r_code,
    training_matrices,
)

__version__ = "0.1.0"
