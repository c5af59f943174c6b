"""Round orchestration: client sampling, local training, method dispatch,
and full-experiment execution.

A run is a pure function of (inputs, seed): every random draw comes from a
stream keyed by stable labels such as ("round", t) -> ("client", i), so
results do not depend on client processing order or worker scheduling.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .datasets import ClientDataset, train_val_split
from .engine import (
    Move,
    RoundAssignment,
    aggregate_cluster,
    assign_by_distance,
    decode_identifiers,
    one_hot,
    privatize_identifier,
    rebalance,
    server_update,
)
from .errors import ConfigError
from .metrics import clustering_accuracy, detect_collapse
from .models import ModelFamily, design_matrix, get_family
from .privacy import PrivacyConfig
from .streams import RngStream, derive_stream
from .vectors import clip


class Method(str, enum.Enum):
    RR_IFCA = "rr_ifca"
    RR_FESEM = "rr_fesem"
    DP_IFCA = "dp_ifca"
    DP_FESEM = "dp_fesem"
    DP_FEDAVG = "dp_fedavg"

    @property
    def uses_rebalance(self) -> bool:
        return self in (Method.RR_IFCA, Method.RR_FESEM)

    @property
    def assignment_rule(self) -> Optional[str]:
        if self is Method.DP_FEDAVG:
            return None
        if self in (Method.RR_FESEM, Method.DP_FESEM):
            return "distance"
        return "loss"


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 1.0
    local_lr: float = 0.1
    local_epochs: int = 1
    batch_size: int = 32
    model_family: str = "linear_regression_mse"

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise ConfigError(f"gamma must be nonnegative, got {self.gamma}")
        if self.local_lr < 0:
            raise ConfigError(f"local_lr must be nonnegative, got {self.local_lr}")
        if self.local_epochs < 1:
            raise ConfigError(f"local_epochs must be >= 1, got {self.local_epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        get_family(self.model_family)


@dataclass(frozen=True)
class FederationState:
    cluster_models: np.ndarray  # (k, d)
    round: int
    method: Method
    rng_root: int

    def __post_init__(self) -> None:
        if self.method is Method.DP_FEDAVG and self.k != 1:
            raise ConfigError("the single-model method requires k = 1")

    @property
    def k(self) -> int:
        return self.cluster_models.shape[0]

    @property
    def dim(self) -> int:
        return self.cluster_models.shape[1]


@dataclass(frozen=True)
class RoundRecord:
    round: int
    selected: Tuple[int, ...]
    sizes_pre: Tuple[int, ...]
    sizes_post: Tuple[int, ...]
    donors: Tuple[Move, ...]
    effective_noise_std: Tuple[float, ...]
    mean_train_loss: float

    @property
    def n_donors(self) -> int:
        return len(self.donors)


@dataclass(frozen=True)
class EvalRow:
    round: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    clustering_accuracy: float
    min_group_size: int
    max_group_size: int
    donors_this_round: int
    collapsed_clusters: int


@dataclass
class MetricsHistory:
    seed: int
    rows: List[EvalRow] = field(default_factory=list)
    records: List[RoundRecord] = field(default_factory=list)
    final_models: Optional[np.ndarray] = None


def init_state(
    method: Method, k: int, dim: int, rng_root: int, init_std: float = 0.1
) -> FederationState:
    """Cluster models start as small distinct Gaussian perturbations of zero."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    models = np.zeros((k, dim))
    if init_std > 0:
        for j in range(k):
            gen = derive_stream(rng_root, [("init", j)]).generator()
            models[j] = gen.normal(0.0, init_std, size=dim)
    return FederationState(models, round=0, method=method, rng_root=int(rng_root))


def sample_clients(m: int, q: float, rng: RngStream) -> Tuple[int, ...]:
    """Exactly round(q*m) distinct indices, uniform without replacement."""
    if not 0 < q <= 1:
        raise ConfigError(f"sampling ratio q must be in (0, 1], got {q}")
    n = int(round(q * m))
    if n < 1:
        raise ConfigError(f"round(q*M) = {n}: no clients would be sampled")
    picks = rng.generator().choice(m, size=n, replace=False)
    return tuple(int(i) for i in np.sort(picks))


def local_train(
    ds: ClientDataset,
    start: np.ndarray,
    cfg: TrainConfig,
    rng: RngStream,
    family: Optional[ModelFamily] = None,
) -> np.ndarray:
    """Mini-batch gradient descent on the client's empirical loss.

    Runs ``local_epochs`` shuffled passes; returns the final parameters.
    """
    family = family or get_family(cfg.model_family)
    X1 = design_matrix(ds.features)
    y = ds.targets
    n = X1.shape[0]
    bs = min(cfg.batch_size, n)
    theta = np.asarray(start, dtype=np.float64).copy()
    gen = rng.generator()
    for _ in range(cfg.local_epochs):
        perm = gen.permutation(n)
        for lo in range(0, n, bs):
            idx = perm[lo : lo + bs]
            theta -= cfg.local_lr * family.grad(theta, X1[idx], y[idx])
    return theta


def run_round(
    state: FederationState,
    datasets: Sequence[ClientDataset],
    train_cfg: TrainConfig,
    priv_cfg: PrivacyConfig,
    b_min: int,
    rng: Optional[RngStream] = None,
) -> Tuple[FederationState, RoundRecord]:
    """Execute one communication round and return the new state plus telemetry.

    Order of operations: sample clients; per client, pick a cluster, train
    locally and form the update; privatize and decode identifiers (clustered
    methods); rebalance (rebalancing methods with b_min >= 1); clip updates
    server-side; aggregate noisily per cluster; apply the server step. The
    single-model method skips identifiers and adds noise against sensitivity
    C_theta instead of 2*C_theta (no rebalancing-induced double move).
    """
    t = state.round
    root = rng if rng is not None else derive_stream(state.rng_root, [("round", t)])
    family = get_family(train_cfg.model_family)
    models = [state.cluster_models[j] for j in range(state.k)]
    k = state.k
    m = len(datasets)

    selected = sample_clients(m, priv_cfg.q, root.child("sample"))

    design_cache: Dict[int, np.ndarray] = {}

    def design_of(i: int) -> np.ndarray:
        if i not in design_cache:
            design_cache[i] = design_matrix(datasets[i].features)
        return design_cache[i]

    deltas: Dict[int, np.ndarray] = {}
    identifiers: Dict[int, np.ndarray] = {}
    train_losses: List[float] = []
    rule = state.method.assignment_rule

    for i in selected:
        ds = datasets[i]
        client_rng = root.child("client", i)
        losses = [family.loss(theta, design_of(i), ds.targets) for theta in models]
        j_start = 0 if rule is None else int(np.argmin(losses))
        theta_local = local_train(ds, models[j_start], train_cfg, client_rng.child("train"), family)
        if rule == "distance":
            identifiers[i] = assign_by_distance(theta_local, models)
            j_target = int(np.argmax(identifiers[i]))
        else:
            j_target = j_start
            if rule == "loss":
                identifiers[i] = one_hot(j_start, k)
        deltas[i] = theta_local - models[j_target]
        train_losses.append(family.loss(theta_local, design_of(i), ds.targets))

    if rule is None:
        pre = RoundAssignment((selected,))
    else:
        privatized = [
            privatize_identifier(
                identifiers[i], priv_cfg.c_s, priv_cfg.sigma_s, root.child("client", i).child("idnoise")
            )
            for i in selected
        ]
        pre = decode_identifiers(privatized, selected, k=k)

    if state.method.uses_rebalance and b_min >= 1:
        post = rebalance(pre, b_min, root.child("rebalance"))
    else:
        post = pre

    clipped = {i: clip(deltas[i], priv_cfg.c_theta) for i in selected}
    factor = 1.0 if state.method is Method.DP_FEDAVG else 2.0
    noise_std = 0.0 if priv_cfg.sigma_theta == 0 else factor * priv_cfg.c_theta * priv_cfg.sigma_theta

    new_models = np.array(state.cluster_models, copy=True)
    effective = []
    for j, group in enumerate(post.groups):
        if not group:
            effective.append(math.nan)  # frozen: no update this round
            continue
        agg = aggregate_cluster(
            [clipped[i] for i in group],
            priv_cfg.c_theta,
            priv_cfg.sigma_theta,
            root.child("cluster", j).child("aggnoise"),
            sensitivity_factor=factor,
        )
        new_models[j] = server_update(models[j], agg, train_cfg.gamma)
        effective.append(noise_std / len(group))

    record = RoundRecord(
        round=t,
        selected=selected,
        sizes_pre=pre.sizes,
        sizes_post=post.sizes,
        donors=post.donors,
        effective_noise_std=tuple(effective),
        mean_train_loss=float(np.mean(train_losses)) if train_losses else math.nan,
    )
    next_state = replace(state, cluster_models=new_models, round=t + 1)
    return next_state, record


def _evaluate(
    state: FederationState,
    train_sets: Sequence[ClientDataset],
    val_sets: Sequence[ClientDataset],
    family: ModelFamily,
    record: Optional[RoundRecord],
    size_history: List[Tuple[int, ...]],
    collapse_window: int,
    collapse_threshold: int,
) -> EvalRow:
    models = [state.cluster_models[j] for j in range(state.k)]
    preds = []
    tr_num = va_num = acc_num = 0.0
    tr_den = va_den = 0
    for tr, va in zip(train_sets, val_sets):
        losses = [family.loss(theta, design_matrix(tr.features), tr.targets) for theta in models]
        j = int(np.argmin(losses))
        preds.append(j)
        tr_num += losses[j] * tr.n_samples
        tr_den += tr.n_samples
        Xv = design_matrix(va.features)
        va_num += family.loss(models[j], Xv, va.targets) * va.n_samples
        va_den += va.n_samples
        if family.accuracy is not None:
            acc_num += family.accuracy(models[j], Xv, va.targets) * va.n_samples

    truths = [ds.true_cluster for ds in train_sets]
    if all(t is not None for t in truths) and state.k <= 8 and max(truths) < state.k:
        cluster_acc = clustering_accuracy(preds, truths, state.k)
    else:
        cluster_acc = math.nan

    return EvalRow(
        round=state.round,
        train_loss=tr_num / tr_den,
        val_loss=va_num / va_den,
        val_accuracy=(acc_num / va_den) if family.accuracy is not None else math.nan,
        clustering_accuracy=cluster_acc,
        min_group_size=min(record.sizes_post) if record else 0,
        max_group_size=max(record.sizes_post) if record else 0,
        donors_this_round=record.n_donors if record else 0,
        collapsed_clusters=detect_collapse(size_history, collapse_window, collapse_threshold),
    )


def run_experiment(
    datasets: Sequence[ClientDataset],
    method: Method,
    k: int,
    train_cfg: TrainConfig,
    priv_cfg: PrivacyConfig,
    b_min: int,
    rounds: int,
    seed: int,
    eval_every: int = 1,
    val_fraction: float = 0.2,
    init_std: float = 0.1,
    collapse_window: int = 10,
    collapse_threshold: int = 1,
) -> MetricsHistory:
    """Run T rounds from a fresh initialization, evaluating periodically.

    Every client's data is split once into train/validation parts; cluster
    selection and local training see only the training part, metrics are
    reported on the held-out part.
    """
    if rounds < 0:
        raise ConfigError(f"rounds must be nonnegative, got {rounds}")
    if eval_every < 1:
        raise ConfigError(f"eval_every must be >= 1, got {eval_every}")
    family = get_family(train_cfg.model_family)

    splits = [train_val_split(ds, 1.0 - val_fraction, seed) for ds in datasets]
    train_sets = [tr for tr, _ in splits]
    val_sets = [va for _, va in splits]

    p = train_sets[0].n_features
    n_classes = int(max(ds.targets.max() for ds in datasets)) + 1 if family.is_classifier else 1
    state = init_state(method, k, family.dim(p, n_classes), seed, init_std)

    history = MetricsHistory(seed=seed)
    size_history: List[Tuple[int, ...]] = []
    history.rows.append(
        _evaluate(state, train_sets, val_sets, family, None, size_history,
                  collapse_window, collapse_threshold)
    )
    record = None
    for t in range(rounds):
        state, record = run_round(state, train_sets, train_cfg, priv_cfg, b_min)
        history.records.append(record)
        size_history.append(record.sizes_post)
        if (t + 1) % eval_every == 0 or (t + 1) == rounds:
            history.rows.append(
                _evaluate(state, train_sets, val_sets, family, record, size_history,
                          collapse_window, collapse_threshold)
            )
    history.final_models = state.cluster_models
    return history
