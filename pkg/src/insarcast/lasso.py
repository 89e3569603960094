"""L1-regularized linear forecaster trained by full-batch Adam.

Features and target are z-scored before fitting, so one penalty weight
treats all lags fairly; the stored scalers map standardized predictions
back to mm. The objective is

    (1/N) * sum (y_hat - y)^2 + alpha * sum |w_j|

with the subgradient of |w| taken as sign(w) and sign(0) = 0. The bias is
not penalised. Constant feature columns get a standard deviation of 1 and
their weight pinned to exactly zero; they cannot carry signal and this
avoids dividing by zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInput, FeatureCountMismatch, InvalidConfig


@dataclass
class LinearModel:
    weights: np.ndarray  # standardized space, one per feature
    bias: float
    feature_means: np.ndarray
    feature_stds: np.ndarray
    target_mean: float
    target_std: float
    feature_names: list[str] | None = None
    # training metadata; informative only, not persisted
    objective_history: list[float] | None = field(default=None, compare=False)

    @property
    def n_features(self) -> int:
        return len(self.weights)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise FeatureCountMismatch(
                f"model expects {self.n_features} features, got input shape {X.shape}"
            )
        z = (X - self.feature_means) / self.feature_stds
        return self.target_mean + self.target_std * (z @ self.weights + self.bias)


@dataclass(frozen=True)
class LassoParams:
    alpha: float = 0.01
    learning_rate: float = 1e-3
    epochs: int = 4000
    seed: int = 42

    def __post_init__(self):
        if self.alpha < 0:
            raise InvalidConfig(f"alpha must be non-negative, got {self.alpha}")
        if self.learning_rate <= 0 or self.epochs < 1:
            raise InvalidConfig("learning_rate must be positive and epochs >= 1")


def lasso_train(
    X: np.ndarray,
    y: np.ndarray,
    params: LassoParams | None = None,
    feature_names: list[str] | None = None,
) -> LinearModel:
    """Fit weights on z-scored data with Adam; records the objective path."""
    params = params or LassoParams()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or len(X) != len(y):
        raise EmptyInput(f"bad training shapes X={X.shape}, y={y.shape}")
    n, p = X.shape
    if n == 0:
        raise EmptyInput("cannot train on zero samples")

    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    constant = sd == 0.0
    sd = np.where(constant, 1.0, sd)
    y_mu = float(y.mean())
    y_sd = float(y.std())
    if y_sd == 0.0:
        y_sd = 1.0
    Z = (X - mu) / sd
    t = (y - y_mu) / y_sd

    rng = np.random.default_rng(params.seed)
    w = rng.uniform(-1e-3, 1e-3, size=p)
    w[constant] = 0.0
    b = 0.0

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m_w = np.zeros(p)
    v_w = np.zeros(p)
    m_b = v_b = 0.0
    history: list[float] = []
    for step in range(1, params.epochs + 1):
        err = Z @ w + b - t
        history.append(float(np.mean(err * err) + params.alpha * np.sum(np.abs(w))))
        g_w = (2.0 / n) * (Z.T @ err) + params.alpha * np.sign(w)
        g_b = (2.0 / n) * err.sum()
        g_w[constant] = 0.0
        m_w = beta1 * m_w + (1 - beta1) * g_w
        v_w = beta2 * v_w + (1 - beta2) * g_w * g_w
        m_b = beta1 * m_b + (1 - beta1) * g_b
        v_b = beta2 * v_b + (1 - beta2) * g_b * g_b
        corr1 = 1 - beta1**step
        corr2 = 1 - beta2**step
        w -= params.learning_rate * (m_w / corr1) / (np.sqrt(v_w / corr2) + eps)
        b -= params.learning_rate * (m_b / corr1) / (np.sqrt(v_b / corr2) + eps)
        w[constant] = 0.0

    err = Z @ w + b - t
    history.append(float(np.mean(err * err) + params.alpha * np.sum(np.abs(w))))
    return LinearModel(
        weights=w,
        bias=float(b),
        feature_means=mu,
        feature_stds=sd,
        target_mean=y_mu,
        target_std=y_sd,
        feature_names=list(feature_names) if feature_names else None,
        objective_history=history,
    )


def lasso_predict(model: LinearModel, X: np.ndarray) -> np.ndarray:
    return model.predict(X)


# --- persistence -----------------------------------------------------------


def save_linear(model: LinearModel, path: str | Path) -> None:
    doc = {
        "weights": model.weights.tolist(),
        "bias": model.bias,
        "feature_means": model.feature_means.tolist(),
        "feature_stds": model.feature_stds.tolist(),
        "target_mean": model.target_mean,
        "target_std": model.target_std,
        "feature_names": model.feature_names,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_linear(path: str | Path) -> LinearModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return LinearModel(
        weights=np.asarray(doc["weights"], dtype=float),
        bias=float(doc["bias"]),
        feature_means=np.asarray(doc["feature_means"], dtype=float),
        feature_stds=np.asarray(doc["feature_stds"], dtype=float),
        target_mean=float(doc["target_mean"]),
        target_std=float(doc["target_std"]),
        feature_names=doc.get("feature_names"),
    )
