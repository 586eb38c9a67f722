"""Polynomial control-barrier filtering and driving-style identification.

Safety filtering for planar double-integrator vehicles via quadratic
programs over polynomial class-K barrier conditions, ridge identification of
other agents' barrier coefficients from observed clearances, and an adaptive
ramp-merge loop that couples the two.
"""

from .barrier import (AlphaVector, BarrierBasis, SafetyConfig, basis, hdot,
                      kappa, safety_value)
from .controller import (DEFAULT_LIMITS, ControlLimits, NominalPlan, QpProblem,
                         QpSolution, build_safety_constraint, nominal_control,
                         safe_control, solve_qp)
from .dynamics import DEFAULT_DT, VehicleState, step
from .errors import (ConfigurationError, DegenerateConstraintError, DomainError,
                     InsufficientDataError, RankDeficiencyError)
from .learner import (AlphaEstimate, BarrierSample, RidgeConfig, StyleLearner,
                      check_convergence, export_samples, fit, import_samples,
                      observe, observe_analytic)
from .adaptive import (DEFAULT_POLICY, AdaptiveRecord, CompatibilityRow,
                       MismatchTrial, StylePolicy, aggressiveness_score,
                       compatibility_constraint, experiment_assumption_mismatch,
                       run_adaptive_merge, select_alpha)
from .scenario import (AdaptiveComparison, PredictionSummary, PredictionTrial,
                       RoadGeometry, ScenarioConfig, SweepEntry, TrajectoryLog,
                       TrialMetrics, TrialRecord, VehicleSpec,
                       adaptive_preset_config, default_geometry,
                       experiment_behavior_sweep, experiment_invariance,
                       experiment_prediction, experiment_prediction_in_loop,
                       gamma_sweep_settings, invariance_trial_setup,
                       prediction_trial_setup, run_trial, simulate,
                       sweep_trial_config)

__version__ = "0.1.0"

__all__ = [
    "AlphaVector", "BarrierBasis", "SafetyConfig", "basis", "hdot", "kappa",
    "safety_value",
    "ControlLimits", "DEFAULT_LIMITS", "NominalPlan", "QpProblem", "QpSolution",
    "build_safety_constraint", "nominal_control", "safe_control", "solve_qp",
    "DEFAULT_DT", "VehicleState", "step",
    "ConfigurationError", "DegenerateConstraintError", "DomainError",
    "InsufficientDataError", "RankDeficiencyError",
    "AlphaEstimate", "BarrierSample", "RidgeConfig", "StyleLearner",
    "check_convergence", "export_samples", "fit", "import_samples", "observe",
    "observe_analytic",
    "DEFAULT_POLICY", "AdaptiveRecord", "CompatibilityRow", "MismatchTrial",
    "StylePolicy", "aggressiveness_score", "compatibility_constraint",
    "experiment_assumption_mismatch", "run_adaptive_merge", "select_alpha",
    "AdaptiveComparison", "PredictionSummary", "PredictionTrial", "RoadGeometry",
    "ScenarioConfig", "SweepEntry", "TrajectoryLog", "TrialMetrics",
    "TrialRecord", "VehicleSpec", "adaptive_preset_config", "default_geometry",
    "experiment_behavior_sweep", "experiment_invariance", "experiment_prediction",
    "experiment_prediction_in_loop", "gamma_sweep_settings",
    "invariance_trial_setup", "prediction_trial_setup", "run_trial", "simulate",
    "sweep_trial_config",
    "__version__",
]
