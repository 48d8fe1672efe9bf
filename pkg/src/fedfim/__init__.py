"""Deterministic simulator of resource-constrained federated learning.

Ships a quasi-Newton server optimizer whose curvature pairs are smoothed by
diagonal empirical Fisher estimates, averaging baselines, a one-vs-all
training scheme for label-skewed clients, IID / label-skew partitioners, and
an exact per-round communication ledger with closed-form cost models.
"""

from .config import ExperimentConfig, parse_config, parse_config_text
from .data import (
    Dataset,
    PartitionPlan,
    load_csv,
    load_idx,
    partition_iid,
    partition_noniid_l,
    share_subset,
    synth_logistic,
)
from .federation import (
    FederatedRun,
    RoundConfig,
    RoundReport,
    comm_cost_fedavg,
    comm_cost_proposed,
    run_experiment,
)
from .fedova import FedOvaRun, OvaEnsemble, ensemble_predict, run_fedova
from .lbfgs import (
    CurvaturePair,
    FimDiagonal,
    LbfgsMemory,
    OptimizerConfig,
    aggregate_fim,
    curvature_ratio,
    dense_bfgs_oracle,
    empty_memory,
    fim_diagonal,
    smooth_y,
    two_loop_direction,
    update_memory,
)
from .models import (
    ModelSpec,
    batch_gradient,
    forward_loss,
    init_params,
    per_sample_gradients,
    predict_proba,
)
from .numerics import finite_difference_gradient, rel_err, stream, weighted_average

__version__ = "0.1.0"

__all__ = [
    "CurvaturePair",
    "Dataset",
    "ExperimentConfig",
    "FedOvaRun",
    "FederatedRun",
    "FimDiagonal",
    "LbfgsMemory",
    "ModelSpec",
    "OptimizerConfig",
    "OvaEnsemble",
    "PartitionPlan",
    "RoundConfig",
    "RoundReport",
    "aggregate_fim",
    "batch_gradient",
    "comm_cost_fedavg",
    "comm_cost_proposed",
    "curvature_ratio",
    "dense_bfgs_oracle",
    "empty_memory",
    "ensemble_predict",
    "fim_diagonal",
    "finite_difference_gradient",
    "forward_loss",
    "init_params",
    "load_csv",
    "load_idx",
    "parse_config",
    "parse_config_text",
    "partition_iid",
    "partition_noniid_l",
    "per_sample_gradients",
    "predict_proba",
    "rel_err",
    "run_experiment",
    "run_fedova",
    "share_subset",
    "smooth_y",
    "stream",
    "synth_logistic",
    "two_loop_direction",
    "update_memory",
    "weighted_average",
]
