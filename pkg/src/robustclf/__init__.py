"""Robust detector for diffusion-generated images over joint image+text
embedding vectors: a 3-layer MLP trained with a blend of tail-focused
(CVaR over cross-entropy) and pairwise ranking losses under sharpness-aware
updates, evaluated by exact rank-based AUC.
"""

from .bank import (
    BankFormatError,
    FeatureBank,
    banks_equal,
    class_counts,
    generate_synthetic,
    load_bank,
    save_bank,
    split_bank,
)
from .config import SEED_ENV_VAR, TrainConfig, load_config, save_config
from .estimator import RobustDetector
from .losses import (
    LossReport,
    auc_surrogate,
    bce_per_example,
    cvar_lambda_star,
    cvar_loss_and_grad,
    total_loss,
)
from .metrics import EvalReport, evaluate, exact_auc, roc_curve
from .mlp import MlpModel, init_model, load_model, predict_scores, save_model, score
from .optim import AdamState, LrSchedule, adam_step, compute_epsilon, lr_at
from .trainer import (
    NanLossError,
    TrainRunRecord,
    landscape_slice,
    run_ablation,
    run_sweep,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "BankFormatError",
    "FeatureBank",
    "banks_equal",
    "class_counts",
    "generate_synthetic",
    "load_bank",
    "save_bank",
    "split_bank",
    "SEED_ENV_VAR",
    "TrainConfig",
    "load_config",
    "save_config",
    "RobustDetector",
    "LossReport",
    "auc_surrogate",
    "bce_per_example",
    "cvar_lambda_star",
    "cvar_loss_and_grad",
    "total_loss",
    "EvalReport",
    "evaluate",
    "exact_auc",
    "roc_curve",
    "MlpModel",
    "init_model",
    "load_model",
    "predict_scores",
    "save_model",
    "score",
    "AdamState",
    "LrSchedule",
    "adam_step",
    "compute_epsilon",
    "lr_at",
    "NanLossError",
    "TrainRunRecord",
    "landscape_slice",
    "run_ablation",
    "run_sweep",
    "train",
]
