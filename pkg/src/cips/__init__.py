"""Cluster-level inverse-propensity debiasing for implicit-feedback
recommenders: deep-embedded user clustering, stratified propensity
estimation, IPS-weighted matrix factorization with shared embeddings,
baselines, and unbiased ranking evaluation."""

from .clustering import (
    Assignments,
    ClusterModel,
    encode,
    hard_assign,
    kl_loss,
    soft_assign,
    target_distribution,
    train_clustering,
)
from .config import RunConfig, TrainConfig, load_run_config, serialize_config
from .data import (
    InteractionDataset,
    SyntheticGroundTruth,
    generate_synthetic,
    item_popularity,
    load_dataset,
    load_rating_log,
    save_dataset,
    split_validation,
)
from .evaluation import (
    EvalReport,
    dcg_at_k,
    evaluate,
    map_at_k,
    recall_at_k,
    snips_estimate,
)
from .kernels import backend as kernel_backend
from .optim import AdamState, adam_step, init_adam_state
from .propensity import (
    PropensityTable,
    cluster_propensity,
    item_popularity_propensity,
    lookup,
    user_level_propensity,
)
from .recsys import (
    RecModel,
    ideal_loss,
    ips_loss,
    load_model,
    naive_loss,
    predict,
    save_model,
    train_baseline,
    train_cips,
    train_recommender,
)

__version__ = "0.1.0"

__all__ = [
    "Assignments", "ClusterModel", "encode", "hard_assign", "kl_loss",
    "soft_assign", "target_distribution", "train_clustering",
    "RunConfig", "TrainConfig", "load_run_config", "serialize_config",
    "InteractionDataset", "SyntheticGroundTruth", "generate_synthetic",
    "item_popularity", "load_dataset", "load_rating_log", "save_dataset",
    "split_validation",
    "EvalReport", "dcg_at_k", "evaluate", "map_at_k", "recall_at_k",
    "snips_estimate",
    "kernel_backend",
    "AdamState", "adam_step", "init_adam_state",
    "PropensityTable", "cluster_propensity", "item_popularity_propensity",
    "lookup", "user_level_propensity",
    "RecModel", "ideal_loss", "ips_loss", "load_model", "naive_loss",
    "predict", "save_model", "train_baseline", "train_cips",
    "train_recommender",
    "__version__",
]
