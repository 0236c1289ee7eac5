"""iswerm-lab: importance-sampling-weighted ERM on adaptively logged bandit data.

Collect eps-greedy bandit logs with exact propensities, reweight them with
any of seven importance-weighting schemes, fit weighted learners (least
squares, ridge, lasso, CART, exhaustive policy search), evaluate against a
reference action distribution, and verify the underlying concentration
identities by exact finite sums and Monte Carlo scaling experiments.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND
from .collect import ExplorationSchedule, GreedySpec, collect, exploration_bound
from .data import (
    LoggedDataset,
    LoggedRecord,
    ReferenceWeight,
    load_jsonl,
    save_jsonl,
    validate_dataset,
)
from .envs import ClassificationEnv, DiscreteEnv, LinearEnv, QuadraticEnv, build_env
from .evaluate import (
    ExperimentConfig,
    excess_risk,
    fit_rate,
    reference_risk_mc,
    replicate_experiment,
)
from .ingest import ClassificationTable, load_csv_classification
from .seeding import stage_rng, stage_seed
from .weights import SCHEMES, compute_weights

__all__ = [
    "__version__",
    "KERNEL_BACKEND",
    "ExplorationSchedule",
    "GreedySpec",
    "collect",
    "exploration_bound",
    "LoggedDataset",
    "LoggedRecord",
    "ReferenceWeight",
    "load_jsonl",
    "save_jsonl",
    "validate_dataset",
    "ClassificationEnv",
    "DiscreteEnv",
    "LinearEnv",
    "QuadraticEnv",
    "build_env",
    "ExperimentConfig",
    "excess_risk",
    "fit_rate",
    "reference_risk_mc",
    "replicate_experiment",
    "ClassificationTable",
    "load_csv_classification",
    "stage_rng",
    "stage_seed",
    "SCHEMES",
    "compute_weights",
]
