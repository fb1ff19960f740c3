"""Comparison models: L2-regularized logistic regression and the
single-score (MELD-style) classifier."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .dataio import FeatureViews, Standardizer
from .errors import ConfigError, DataError, ShapeError
from .nn import FORMAT_VERSION, Adam, Parameter

DEFAULT_EPOCHS = 200
DEFAULT_LR = 0.1
DEFAULT_L2 = 1e-4


class ConstantScoreWarning(UserWarning):
    """The score column carries no variation; only an intercept is fit."""


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    center: np.ndarray | None = None
    scale: np.ndarray | None = None
    train_loss: list | None = None

    @property
    def n_features(self) -> int:
        return len(self.weights)

    def _prepare(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None] if self.n_features == 1 else X[None, :]
        if X.shape[1] != self.n_features:
            raise ShapeError(f"expected {self.n_features} features, got {X.shape[1]}")
        if self.center is not None:
            X = (X - self.center) / self.scale
        return X

    def decision_function(self, X) -> np.ndarray:
        return self._prepare(X) @ self.weights + self.bias

    def predict_proba(self, X) -> np.ndarray:
        z = self.decision_function(X)
        return 0.5 * (1.0 + np.tanh(0.5 * z))

    def to_dict(self) -> dict:
        return {
            "format": "logistic",
            "version": FORMAT_VERSION,
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "center": None if self.center is None else self.center.tolist(),
            "scale": None if self.scale is None else self.scale.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticModel":
        if d.get("format") != "logistic":
            raise ConfigError(f"not a logistic model: {d.get('format')!r}")
        center = None if d["center"] is None else np.array(d["center"], dtype=float)
        scale = None if d["scale"] is None else np.array(d["scale"], dtype=float)
        return cls(np.array(d["weights"], dtype=float), float(d["bias"]), center, scale)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def logistic_objective(weights, bias, X, y, l2):
    """Mean cross-entropy plus ``l2/2 * |w|^2``, with its gradient."""
    z = X @ weights + bias
    # log(1 + e^z) - y z, stable for both signs
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * weights @ weights
    p = 0.5 * (1.0 + np.tanh(0.5 * z))
    r = (p - y) / len(y)
    return float(loss), X.T @ r + l2 * weights, float(r.sum())


def _check_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if not np.isin(y, (0.0, 1.0)).all():
        raise DataError("labels must be 0/1")
    if len(np.unique(y)) < 2:
        raise DataError("both classes are required to fit a logistic model")
    return y


def fit_logistic(X, y, epochs: int = DEFAULT_EPOCHS, lr: float = DEFAULT_LR, l2: float = DEFAULT_L2) -> LogisticModel:
    """Full-batch Adam on the L2-regularized cross-entropy from a zero start."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ShapeError("X must be 2-D")
    y = _check_labels(y)
    if len(y) != len(X):
        raise ShapeError(f"X has {len(X)} rows, y has {len(y)}")
    if epochs < 0 or lr <= 0 or l2 < 0:
        raise ConfigError("need epochs >= 0, lr > 0, l2 >= 0")
    theta = Parameter(np.zeros(X.shape[1] + 1), "logistic")
    opt = Adam([theta], lr=lr)
    history = []
    for _ in range(epochs):
        loss, gw, gb = logistic_objective(theta.value[:-1], theta.value[-1], X, y, l2)
        history.append(loss)
        opt.step([np.append(gw, gb)])
    return LogisticModel(theta.value[:-1].copy(), float(theta.value[-1]), train_loss=history)


def design_matrix(views: FeatureViews, standardizer: Standardizer | None = None) -> np.ndarray:
    """Numeric block (scaled when a standardizer is given) then one-hot codes."""
    dense = views.dense if standardizer is None else standardizer.transform(views.dense)
    return np.hstack([dense[:, views.numeric_slice], views.onehot()])


def fit_meld_classifier(scores, y, epochs: int = DEFAULT_EPOCHS, lr: float = DEFAULT_LR, l2: float = DEFAULT_L2) -> LogisticModel:
    """Logistic regression on one score column.

    The score is standardized internally (the scaling is stored on the model),
    so the fit is insensitive to the score's units. A constant score yields an
    intercept-only model.
    """
    s = np.asarray(scores, dtype=float).ravel()
    if np.isnan(s).any():
        raise DataError("score column has missing values")
    y = _check_labels(y)
    center, scale = s.mean(), s.std()
    if scale == 0:
        warnings.warn("constant score; fitting an intercept-only model", ConstantScoreWarning, stacklevel=2)
        model = fit_logistic(np.zeros((len(s), 1)), y, epochs, lr, l2)
        return LogisticModel(np.zeros(1), model.bias, np.array([center]), np.ones(1), model.train_loss)
    model = fit_logistic(((s - center) / scale)[:, None], y, epochs, lr, l2)
    return LogisticModel(model.weights, model.bias, np.array([center]), np.array([scale]), model.train_loss)
