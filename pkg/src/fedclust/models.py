"""Trainable model families: convex generalized linear losses only.

Conventions: features get an appended intercept column; the linear family
minimizes the mean squared residual without a 1/2 factor, so its gradient is
``2/n * X^T (X theta - y)``. The multinomial family minimizes mean
cross-entropy over flattened (n_classes x (p+1)) weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError


def design_matrix(features: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    return np.hstack([X, np.ones((X.shape[0], 1))])


@dataclass(frozen=True)
class ModelFamily:
    name: str
    dim: Callable[[int, int], int]          # (n_features, n_classes) -> d
    loss: Callable[[np.ndarray, np.ndarray, np.ndarray], float]
    grad: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    accuracy: Optional[Callable[[np.ndarray, np.ndarray, np.ndarray], float]] = None
    is_classifier: bool = False


def squared_error_loss(theta: np.ndarray, X1: np.ndarray, y: np.ndarray) -> float:
    r = X1 @ theta - y
    return float(np.mean(r * r))


def squared_error_grad(theta: np.ndarray, X1: np.ndarray, y: np.ndarray) -> np.ndarray:
    r = X1 @ theta - y
    return (2.0 / X1.shape[0]) * (X1.T @ r)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _unflatten(theta: np.ndarray, n_cols: int) -> np.ndarray:
    return theta.reshape(-1, n_cols)


def cross_entropy_loss(theta: np.ndarray, X1: np.ndarray, y: np.ndarray) -> float:
    W = _unflatten(theta, X1.shape[1])
    probs = _softmax(X1 @ W.T)
    idx = y.astype(int)
    return float(-np.mean(np.log(np.clip(probs[np.arange(len(idx)), idx], 1e-300, None))))


def cross_entropy_grad(theta: np.ndarray, X1: np.ndarray, y: np.ndarray) -> np.ndarray:
    W = _unflatten(theta, X1.shape[1])
    probs = _softmax(X1 @ W.T)
    idx = y.astype(int)
    probs[np.arange(len(idx)), idx] -= 1.0
    return ((probs.T @ X1) / X1.shape[0]).ravel()


def classification_accuracy(theta: np.ndarray, X1: np.ndarray, y: np.ndarray) -> float:
    W = _unflatten(theta, X1.shape[1])
    pred = np.argmax(X1 @ W.T, axis=1)
    return float(np.mean(pred == y.astype(int)))


LINEAR_REGRESSION = ModelFamily(
    name="linear_regression_mse",
    dim=lambda p, n_classes: p + 1,
    loss=squared_error_loss,
    grad=squared_error_grad,
)

MULTINOMIAL_LOGISTIC = ModelFamily(
    name="multinomial_logistic",
    dim=lambda p, n_classes: n_classes * (p + 1),
    loss=cross_entropy_loss,
    grad=cross_entropy_grad,
    accuracy=classification_accuracy,
    is_classifier=True,
)

_FAMILIES = {f.name: f for f in (LINEAR_REGRESSION, MULTINOMIAL_LOGISTIC)}


def get_family(name: str) -> ModelFamily:
    try:
        return _FAMILIES[name]
    except KeyError:
        raise ConfigError(
            f"unknown model_family {name!r}; choose from {sorted(_FAMILIES)}"
        ) from None
