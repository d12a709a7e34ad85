"""Active learning of nonlinear dynamics with Gaussian processes.

Learns unknown dynamics with per-output-dimension GP regression while
choosing control inputs that maximize predictive entropy, and benchmarks
six excitation strategies (PRBS, chirp, greedy, sep, rec, p&a) on analytic
simulated plants.
"""

__version__ = "0.1.0"

from .gp import (
    Dataset,
    GPModel,
    Hyperparameters,
    HyperOptConfig,
    Prediction,
    add_observations,
    entropy,
    fit,
    kernel_eval,
    log_marginal_likelihood,
    optimize_hyperparameters,
    predict,
    predict_batch,
)
from .harness import (
    BenchmarkReport,
    ExperimentConfig,
    GPUpdateConfig,
    MetricsConfig,
    TrialResult,
    emit_results,
    replay,
    run_benchmark,
    run_trial,
)
from .metrics import EvaluationGrid, build_evaluation_grid, coverage, rmse
from .strategies import StrategyContext, StrategyKind, make_strategy
from .systems import DynamicalSystem, SystemSpec, Trajectory, make_system
from .trajopt import (
    OptimizerConfig,
    PlannedTrajectory,
    entropy_objective,
    mean_rollout,
    optimize_entropy,
    optimize_goal,
)

__all__ = [
    "Dataset",
    "GPModel",
    "Hyperparameters",
    "HyperOptConfig",
    "Prediction",
    "add_observations",
    "entropy",
    "fit",
    "kernel_eval",
    "log_marginal_likelihood",
    "optimize_hyperparameters",
    "predict",
    "predict_batch",
    "BenchmarkReport",
    "ExperimentConfig",
    "GPUpdateConfig",
    "MetricsConfig",
    "TrialResult",
    "emit_results",
    "replay",
    "run_benchmark",
    "run_trial",
    "EvaluationGrid",
    "build_evaluation_grid",
    "coverage",
    "rmse",
    "StrategyContext",
    "StrategyKind",
    "make_strategy",
    "DynamicalSystem",
    "SystemSpec",
    "Trajectory",
    "make_system",
    "OptimizerConfig",
    "PlannedTrajectory",
    "entropy_objective",
    "mean_rollout",
    "optimize_entropy",
    "optimize_goal",
]
