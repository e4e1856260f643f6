"""Scikit-learn style estimator wrapping the full training pipeline.

RobustDetector(...).fit(X, y) trains the 3-layer scorer on rows of feature
vectors with binary labels (0 = real, 1 = generated) and exposes the usual
predict / predict_proba / decision_function surface. Hyperparameters mirror
TrainConfig field for field; see config.TrainConfig for domains and defaults.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .bank import FeatureBank
from .config import TrainConfig
from .mlp import predict_scores
from .trainer import train


class RobustDetector(BaseEstimator, ClassifierMixin):
    """Binary real-vs-generated detector over embedding feature vectors.

    fit() trains with the blended tail + ranking objective under
    sharpness-aware updates; predict_proba() scores with deterministic eval
    semantics. Training is bit-reproducible for a fixed (X, y, params, seed).
    """

    def __init__(
        self,
        alpha: float = 0.8,
        gamma: float = 0.5,
        eta: float = 0.6,
        power: float = 2.0,
        delta: float = 0.05,
        lr: float = 1e-3,
        batch_size: int = 32,
        max_iterations: int = 50,
        hidden_dim: int = 1536,
        dropout_rate: float = 0.1,
        use_cvar: bool = True,
        use_auc: bool = True,
        use_sam: bool = True,
        sam_variant: str = "sign",
        lr_schedule: str = "cosine",
        seed: int = 0,
    ):
        self.alpha = alpha
        self.gamma = gamma
        self.eta = eta
        self.power = power
        self.delta = delta
        self.lr = lr
        self.batch_size = batch_size
        self.max_iterations = max_iterations
        self.hidden_dim = hidden_dim
        self.dropout_rate = dropout_rate
        self.use_cvar = use_cvar
        self.use_auc = use_auc
        self.use_sam = use_sam
        self.sam_variant = sam_variant
        self.lr_schedule = lr_schedule
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(**self.get_params())

    def fit(self, X, y) -> "RobustDetector":
        X, y = check_X_y(X, y, dtype=np.float64)
        labels = np.asarray(y)
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 (real) or 1 (generated)")
        labels = labels.astype(np.uint8)
        if labels.min() == labels.max():
            raise ValueError("fit needs examples of both classes")
        cfg = self._config()
        bank = FeatureBank(np.ascontiguousarray(X), labels)
        self.model_, self.record_ = train(bank, cfg)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X) -> np.ndarray:
        """Probability that each row is generated, in (0, 1)."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return predict_scores(self.model_, X)

    def predict_proba(self, X) -> np.ndarray:
        p = self.decision_function(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0.5).astype(np.int64)
