"""Input validation helpers shared by the estimator facade and the CLI."""

from __future__ import annotations

from typing import List, Sequence

import numpy as np

from .datasets import ClientDataset
from .errors import ConfigError


def check_positive(name: str, value, strict: bool = True):
    if strict and not value > 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    if not strict and value < 0:
        raise ConfigError(f"{name} must be nonnegative, got {value}")
    return value


def check_fraction(name: str, value, closed_right: bool = True):
    hi_ok = value <= 1 if closed_right else value < 1
    if not (0 < value and hi_ok):
        bracket = "(0, 1]" if closed_right else "(0, 1)"
        raise ConfigError(f"{name} must lie in {bracket}, got {value}")
    return value


def check_int(name: str, value, minimum: int = 0) -> int:
    if not (isinstance(value, (int, np.integer)) and not isinstance(value, bool)):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_clients(X) -> List[ClientDataset]:
    """Validate an estimator input: a nonempty, feature-consistent list of
    per-client datasets (or (features, targets) pairs, coerced)."""
    if X is None or len(X) == 0:
        raise ConfigError("expected a nonempty sequence of client datasets")
    clients: List[ClientDataset] = []
    for pos, item in enumerate(X):
        if isinstance(item, ClientDataset):
            clients.append(item)
        elif isinstance(item, (tuple, list)) and len(item) == 2:
            clients.append(ClientDataset(pos, np.asarray(item[0]), np.asarray(item[1])))
        else:
            raise ConfigError(
                f"client {pos}: expected ClientDataset or (features, targets) pair"
            )
    p = clients[0].n_features
    if any(c.n_features != p for c in clients):
        raise ConfigError("all clients must share the same feature count")
    ids = [c.client_id for c in clients]
    if len(set(ids)) != len(ids):
        raise ConfigError("client ids must be unique")
    return clients
