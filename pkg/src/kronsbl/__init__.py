"""Kronecker-structured sparse Bayesian learning for reflected-channel estimation."""

__version__ = "0.1.0"

from .errors import ConfigError, KronSBLError, SolverDiverged
from .kron import (
    KronOperator,
    SteeringMatrix,
    default_grid,
    khatri_rao,
    kron_apply,
    kron_vec,
    steering_matrix,
    steering_vector,
)
from .channel import (
    Dictionary,
    GroundTruth,
    MeasurementSet,
    SystemConfig,
    build_dictionary,
    cascade_at,
    gen_measurements,
    load_problem,
    reconstruct_cascade,
    save_problem,
    snr_to_sigma2,
    synth_channels,
    true_cascade,
)
from .solvers import (
    EstimateResult,
    HyperParams,
    Posterior,
    SolverConfig,
    classic_sbl_estimate,
    e_step_fast,
    e_step_full,
    estimate,
    kro_sbl_estimate,
    m_step_am,
    m_step_svd,
    omp_estimate,
)
from .metrics import nmse, ser_experiment, srr, support_of
from .sweep import SweepSpec, TrialRecord, run_sweep, run_trial

__all__ = [
    "ConfigError", "KronSBLError", "SolverDiverged",
    "KronOperator", "SteeringMatrix", "default_grid", "khatri_rao",
    "kron_apply", "kron_vec", "steering_matrix", "steering_vector",
    "Dictionary", "GroundTruth", "MeasurementSet", "SystemConfig",
    "build_dictionary", "cascade_at", "gen_measurements", "load_problem",
    "reconstruct_cascade", "save_problem", "snr_to_sigma2", "synth_channels",
    "true_cascade",
    "EstimateResult", "HyperParams", "Posterior", "SolverConfig",
    "classic_sbl_estimate", "e_step_fast", "e_step_full", "estimate",
    "kro_sbl_estimate", "m_step_am", "m_step_svd", "omp_estimate",
    "nmse", "ser_experiment", "srr", "support_of",
    "SweepSpec", "TrialRecord", "run_sweep", "run_trial",
    "__version__",
]
