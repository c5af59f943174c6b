"""Evaluation metrics: clustering accuracy, collapse detection, model scoring."""

from __future__ import annotations

import itertools
from typing import Optional, Sequence, Tuple

import numpy as np

from .datasets import ClientDataset
from .models import ModelFamily, design_matrix


def clustering_accuracy(pred: Sequence[int], truth: Sequence[int], k: int) -> float:
    """Fraction of correctly clustered clients, maximized over relabelings.

    Brute-force search over all k! label permutations; exact and trivially
    correct for the desk-scale regime, hence the k <= 8 cap.
    """
    if k > 8:
        raise ValueError("clustering_accuracy supports k <= 8 (k! permutation search)")
    pred = np.asarray(pred, dtype=int)
    truth = np.asarray(truth, dtype=int)
    if pred.shape != truth.shape:
        raise ValueError("pred and truth must have equal length")
    if pred.size == 0:
        raise ValueError("empty assignment")
    best = 0.0
    for perm in itertools.permutations(range(k)):
        table = np.asarray(perm)
        best = max(best, float(np.mean(table[pred] == truth)))
    return best


def detect_collapse(
    size_history: Sequence[Sequence[int]], window: int = 10, threshold: int = 1
) -> int:
    """Number of clusters starved of updates over the trailing window.

    ``size_history`` holds per-round post-rebalance group sizes; a cluster
    counts as collapsed when its total received updates over the last
    ``window`` rounds fall below ``threshold``. Empty history: nothing has
    collapsed yet.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if not size_history:
        return 0
    tail = np.asarray(size_history[-window:], dtype=int)
    totals = tail.sum(axis=0)
    return int(np.sum(totals < threshold))


def eval_model(
    model: np.ndarray, datasets: Sequence[ClientDataset], family: ModelFamily
) -> Tuple[float, Optional[float]]:
    """Sample-weighted mean loss of one model over a collection of clients,
    plus pooled accuracy for classifier families."""
    if not datasets:
        raise ValueError("eval_model needs at least one dataset")
    loss_num = acc_num = 0.0
    den = 0
    for ds in datasets:
        X1 = design_matrix(ds.features)
        loss_num += family.loss(model, X1, ds.targets) * ds.n_samples
        if family.accuracy is not None:
            acc_num += family.accuracy(model, X1, ds.targets) * ds.n_samples
        den += ds.n_samples
    accuracy = acc_num / den if family.accuracy is not None else None
    return loss_num / den, accuracy
