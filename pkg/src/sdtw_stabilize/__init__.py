"""Soft dynamic time warping loss with training stabilizers."""

from .kernel import (
    SdtwResult,
    batch_value_and_grad,
    cost_matrix,
    grad_wrt_predictions,
    sdtw_forward,
    sdtw_value_and_grad,
    soft_alignment,
    softmin,
)
from .oracle import OracleReport, oracle_check, sdtw_bruteforce, soft_alignment_bruteforce
from .stabilizers import (
    GammaSchedule,
    PriorConfig,
    apply_prior,
    diagonal_prior,
    gamma_at,
    omega_at,
    unfold_targets,
)
from .tasks import SyntheticTaskConfig, collapse_repeats, generate_task
from .training import (
    ExperimentSummary,
    LossStrategy,
    TrainConfig,
    TrainedModel,
    default_strategies,
    evaluate,
    f_measure,
    run_experiment,
    train,
)

__version__ = "0.1.0"
