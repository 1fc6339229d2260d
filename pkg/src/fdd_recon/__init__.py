"""Reconstruction of FDD downlink multipath channels from uplink-estimated
frequency-independent parameters, with a trivariate Newtonized pursuit
estimator, error bounds, benchmark estimators, and a Monte-Carlo harness."""

from .config import (
    NormalizedPath,
    PathComponent,
    SystemConfig,
    denormalize_path,
    normalize_path,
)
from .model import (
    atom,
    delay_vector,
    steering_vector,
    synthesize_downlink,
    synthesize_from_normalized,
    synthesize_siso,
    synthesize_uplink,
)
from .nomp import NompConfig, NompResult, RankDeficientError, StoppingRule, nomp_extract
from .bounds import CrbReport, crb, fisher_matrix
from .downlink import (
    BeamformingType,
    EmptyEstimatesError,
    PilotPattern,
    build_coefficient_matrix,
    reconstruct_downlink,
    refine_gains,
    simulate_downlink_pilots,
)
from .baselines import lmmse_estimate, ls_estimate
from .harness import (
    Cluster,
    Custom,
    EqualPowerGrid,
    ExperimentReport,
    InfeasibleSeparationError,
    SparseTwoPath,
    add_noise,
    cdf_points,
    generate_scenario,
    genie_covariance,
    match_paths,
    mse_metric,
    phase_error_law,
    run_crb_experiment,
    run_false_alarm_experiment,
    run_phase_error_experiment,
    run_reconstruction_experiment,
)

__all__ = [
    "SystemConfig",
    "PathComponent",
    "NormalizedPath",
    "normalize_path",
    "denormalize_path",
    "steering_vector",
    "delay_vector",
    "atom",
    "synthesize_uplink",
    "synthesize_downlink",
    "synthesize_siso",
    "synthesize_from_normalized",
    "NompConfig",
    "NompResult",
    "StoppingRule",
    "RankDeficientError",
    "nomp_extract",
    "crb",
    "CrbReport",
    "fisher_matrix",
    "BeamformingType",
    "PilotPattern",
    "EmptyEstimatesError",
    "build_coefficient_matrix",
    "simulate_downlink_pilots",
    "refine_gains",
    "reconstruct_downlink",
    "ls_estimate",
    "lmmse_estimate",
    "SparseTwoPath",
    "Cluster",
    "EqualPowerGrid",
    "Custom",
    "InfeasibleSeparationError",
    "ExperimentReport",
    "generate_scenario",
    "genie_covariance",
    "add_noise",
    "mse_metric",
    "cdf_points",
    "match_paths",
    "phase_error_law",
    "run_crb_experiment",
    "run_false_alarm_experiment",
    "run_phase_error_experiment",
    "run_reconstruction_experiment",
]
