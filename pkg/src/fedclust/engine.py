"""Server-side round machinery: cluster assignment, identifier privatization,
random rebalancing, and noisy per-cluster aggregation.

Rebalancing moves randomly chosen members out of groups that currently hold
more than ``b_min`` clients into groups holding fewer, until every group
holds at least ``b_min``. Donor draws are uniform without replacement and
are re-screened after every move so no donor group ever ends below
``b_min``; a moved client lands in a group that is immediately capped at
``b_min``, so nobody moves twice.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .datasets import ClientDataset
from .errors import ConfigError
from .streams import RngStream
from .vectors import add_gaussian, clip


class Move(NamedTuple):
    client_id: int
    from_cluster: int
    to_cluster: int


@dataclass(frozen=True)
class RoundAssignment:
    """Partition of the round's selected client ids into k groups."""

    groups: Tuple[Tuple[int, ...], ...]
    donors: Tuple[Move, ...] = ()

    def __post_init__(self) -> None:
        flat = [c for g in self.groups for c in g]
        if len(flat) != len(set(flat)):
            raise ValueError("groups must be disjoint")

    @property
    def k(self) -> int:
        return len(self.groups)

    @property
    def selected(self) -> Tuple[int, ...]:
        return tuple(sorted(c for g in self.groups for c in g))

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(len(g) for g in self.groups)


def one_hot(index: int, k: int) -> np.ndarray:
    if not 0 <= index < k:
        raise ValueError(f"cluster index {index} out of range [0, {k})")
    v = np.zeros(k)
    v[index] = 1.0
    return v


def assign_by_loss(client: ClientDataset, models: Sequence[np.ndarray], loss_fn) -> np.ndarray:
    """One-hot at the model with minimal loss on the client's data.

    ``loss_fn(theta, client) -> float``; ties break to the smallest index.
    """
    losses = [loss_fn(theta, client) for theta in models]
    return one_hot(int(np.argmin(losses)), len(models))


def assign_by_distance(local_model: np.ndarray, models: Sequence[np.ndarray]) -> np.ndarray:
    """One-hot at the cluster model closest in L2 to the client's local model."""
    dists = [float(np.linalg.norm(np.asarray(local_model) - np.asarray(m))) for m in models]
    return one_hot(int(np.argmin(dists)), len(models))


def privatize_identifier(
    s: np.ndarray, c_s: float, sigma_s: float, rng: RngStream
) -> np.ndarray:
    """Clip-then-noise an identifier: clip(s, C_s) + N(0, (C_s sigma_s)^2 I).

    For a one-hot input with C_s <= 1 this equals C_s * (s + N(0, sigma_s^2)),
    so the decoded argmax does not depend on C_s.
    """
    if not c_s > 0:
        raise ConfigError(f"identifier clip bound must be positive, got {c_s}")
    if sigma_s < 0:
        raise ValueError(f"sigma_s must be nonnegative, got {sigma_s}")
    clipped = clip(s, c_s)
    if sigma_s == 0:
        return clipped
    z = rng.generator().standard_normal(clipped.shape[0])
    return clipped + c_s * sigma_s * z


def decode_identifiers(
    privatized: Sequence[np.ndarray],
    client_ids: Optional[Sequence[int]] = None,
    k: Optional[int] = None,
) -> RoundAssignment:
    """Partition clients by the argmax coordinate of their noisy identifiers.

    Ties break to the smallest cluster index. ``client_ids`` defaults to
    positions 0..n-1; groups are kept sorted by id. An empty round yields k
    empty groups (``k`` must then be given explicitly).
    """
    if client_ids is None:
        client_ids = range(len(privatized))
    ids = list(client_ids)
    if len(ids) != len(privatized):
        raise ValueError("client_ids must align with the identifier list")
    if k is None:
        if not privatized:
            raise ValueError("cannot infer k from an empty round; pass k explicitly")
        k = len(privatized[0])
    groups: List[List[int]] = [[] for _ in range(k)]
    for cid, vec in zip(ids, privatized):
        if len(vec) != k:
            raise ValueError("identifier vectors must share one length")
        groups[int(np.argmax(vec))].append(cid)
    return RoundAssignment(tuple(tuple(sorted(g)) for g in groups))


def empty_assignment(k: int) -> RoundAssignment:
    return RoundAssignment(tuple(() for _ in range(k)))


def rebalance(assignment: RoundAssignment, b_min: int, rng: RngStream) -> RoundAssignment:
    """Fill every group below ``b_min`` up to exactly ``b_min`` with donors.

    Deficient groups are processed in ascending cluster index. Each draw
    takes one donor uniformly at random from the members of groups whose
    current size exceeds ``b_min`` (uniformity comes from iid per-client
    priorities keyed under ``rng``, so coupled runs share their draws).
    ``b_min = 0`` disables rebalancing.
    """
    if b_min < 0:
        raise ConfigError(f"rebalance threshold must be nonnegative, got {b_min}")
    if b_min == 0:
        return RoundAssignment(assignment.groups, donors=())
    n = sum(assignment.sizes)
    k = assignment.k
    if b_min > n // k:
        raise ConfigError(
            f"rebalance threshold b_min={b_min} infeasible for "
            f"{n} selected clients in {k} groups (max {n // k})"
        )

    # Per-client priorities; the running argmin over eligible members is a
    # uniform draw without replacement.
    priority = {
        cid: rng.child("client", cid).generator().random()
        for g in assignment.groups
        for cid in g
    }
    # Each group sorted by priority: the group head is its minimum.
    pools: List[List[int]] = [
        sorted(g, key=lambda c: priority[c], reverse=True) for g in assignment.groups
    ]
    members: List[List[int]] = [list(g) for g in assignment.groups]
    donors: List[Move] = []

    for small in range(k):
        while len(members[small]) < b_min:
            donor, source = None, None
            for j in range(k):
                if len(members[j]) > b_min and (
                    donor is None or priority[pools[j][-1]] < priority[donor]
                ):
                    donor, source = pools[j][-1], j
            if donor is None:  # unreachable given the feasibility check
                raise RuntimeError("rebalance ran out of eligible donors")
            pools[source].pop()
            members[source].remove(donor)
            members[small].append(donor)
            donors.append(Move(donor, source, small))

    return RoundAssignment(
        tuple(tuple(sorted(g)) for g in members), donors=tuple(donors)
    )


def aggregate_cluster(
    updates: Sequence[np.ndarray],
    c_theta: float,
    sigma_theta: float,
    rng: RngStream,
    sensitivity_factor: float = 2.0,
) -> np.ndarray:
    """Noisy mean of already-clipped updates.

    Gaussian noise of per-coordinate std ``sensitivity_factor * C_theta *
    sigma_theta`` is added to the sum before dividing by the group size, so
    the effective noise std shrinks as 1/|group|. The factor is 2 for the
    rebalanced clustered release and 1 for the single-model release.
    """
    if not updates:
        raise ValueError("aggregate_cluster received an empty group (internal bug)")
    total = np.sum(np.stack([np.asarray(u, dtype=np.float64) for u in updates]), axis=0)
    # guard the product: c_theta may be inf when clipping is disabled
    std = 0.0 if sigma_theta == 0 else sensitivity_factor * c_theta * sigma_theta
    total = add_gaussian(total, std, rng)
    return total / len(updates)


def server_update(theta: np.ndarray, delta: np.ndarray, gamma: float) -> np.ndarray:
    """One server step: theta + gamma * delta."""
    return np.asarray(theta, dtype=np.float64) + gamma * np.asarray(delta, dtype=np.float64)
