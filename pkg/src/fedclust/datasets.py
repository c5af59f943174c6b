"""Per-client datasets: synthetic generators, CSV ingestion, train/val splits.

The synthetic task is a mixture of noisy lines: every client in cluster j
draws covariates uniformly from ``x_range`` and labels them with
``y = slope_j * x + intercept_j + N(0, noise_std^2)``. Cluster membership is
recorded so clustering quality can be scored against ground truth.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, ParseError
from .streams import derive_stream


@dataclass
class ClientDataset:
    """One client's local data: features (n x p), targets (n,)."""

    client_id: int
    features: np.ndarray
    targets: np.ndarray
    true_cluster: Optional[int] = None

    def __post_init__(self) -> None:
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.targets = np.asarray(self.targets, dtype=np.float64).ravel()
        if self.features.shape[0] != self.targets.shape[0]:
            raise ValueError(
                f"client {self.client_id}: {self.features.shape[0]} feature rows "
                f"vs {self.targets.shape[0]} targets"
            )
        if self.n_samples < 1:
            raise ValueError(f"client {self.client_id}: needs at least one sample")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.targets))):
            raise ValueError(f"client {self.client_id}: non-finite data")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SyntheticSpec:
    """Mixture-of-lines layout: k lines, per-cluster client counts."""

    k: int
    lines: Tuple[Tuple[float, float], ...]
    noise_std: float
    clients_per_cluster: Tuple[int, ...]
    samples_per_client: int = 20
    x_range: Tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "lines", tuple((float(a), float(b)) for a, b in self.lines))
        object.__setattr__(
            self, "clients_per_cluster", tuple(int(c) for c in self.clients_per_cluster)
        )
        if len(self.lines) != self.k:
            raise ConfigError(f"expected {self.k} lines, got {len(self.lines)}")
        if len(self.clients_per_cluster) != self.k:
            raise ConfigError("clients_per_cluster must have one entry per cluster")
        if any(c < 1 for c in self.clients_per_cluster):
            raise ConfigError("clients_per_cluster entries must be positive")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be nonnegative")
        if self.samples_per_client < 1:
            raise ConfigError("samples_per_client must be positive")
        lo, hi = self.x_range
        if not lo < hi:
            raise ConfigError(f"x_range must be an increasing interval, got {self.x_range}")

    @property
    def n_clients(self) -> int:
        return sum(self.clients_per_cluster)


def gen_synthetic(spec: SyntheticSpec, seed: int) -> List[ClientDataset]:
    """Generate the regression mixture; client ids run 0..M-1 in cluster blocks.

    Randomness is keyed per client, so the output is independent of any
    generation order.
    """
    datasets: List[ClientDataset] = []
    cid = 0
    lo, hi = spec.x_range
    for cluster, count in enumerate(spec.clients_per_cluster):
        slope, intercept = spec.lines[cluster]
        for _ in range(count):
            gen = derive_stream(seed, [("client", cid), ("data", 0)]).generator()
            x = gen.uniform(lo, hi, size=spec.samples_per_client)
            y = slope * x + intercept + gen.normal(0.0, spec.noise_std, size=x.shape)
            datasets.append(
                ClientDataset(cid, x.reshape(-1, 1), y, true_cluster=cluster)
            )
            cid += 1
    return datasets


def gen_synthetic_classification(spec: SyntheticSpec, seed: int) -> List[ClientDataset]:
    """Two-class Gaussian mixture reusing the line parameters as class-mean
    offsets; smoke-test companion to the regression generator."""
    datasets: List[ClientDataset] = []
    cid = 0
    for cluster, count in enumerate(spec.clients_per_cluster):
        offset = np.asarray(spec.lines[cluster], dtype=np.float64)
        for _ in range(count):
            gen = derive_stream(seed, [("client", cid), ("data", 0)]).generator()
            n = spec.samples_per_client
            labels = gen.integers(0, 2, size=n)
            centers = np.where(labels[:, None] == 1, offset, -offset)
            x = centers + gen.normal(0.0, max(spec.noise_std, 1e-12), size=(n, 2))
            datasets.append(ClientDataset(cid, x, labels.astype(float), true_cluster=cluster))
            cid += 1
    return datasets


_FLOAT_FMT = "%.17g"


def write_csv(datasets: Sequence[ClientDataset], path) -> None:
    """Serialize clients to the flat CSV schema (17 significant digits)."""
    if not datasets:
        raise ValueError("refusing to write an empty dataset list")
    p = datasets[0].n_features
    if any(ds.n_features != p for ds in datasets):
        raise ValueError("all clients must share the same feature count")
    with_truth = all(ds.true_cluster is not None for ds in datasets)
    header = ["client_id"] + [f"feature_{i}" for i in range(p)] + ["target"]
    if with_truth:
        header.append("true_cluster")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for ds in sorted(datasets, key=lambda d: d.client_id):
            for row, target in zip(ds.features, ds.targets):
                out = [str(ds.client_id)]
                out += [_FLOAT_FMT % v for v in row]
                out.append(_FLOAT_FMT % target)
                if with_truth:
                    out.append(str(ds.true_cluster))
                writer.writerow(out)


def load_csv(path) -> List[ClientDataset]:
    """Load the CSV schema back into per-client datasets, ordered by id.

    Raises ParseError naming the line for malformed rows, inconsistent
    feature counts, or an empty file.
    """
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        feature_cols = [h for h in header if h.startswith("feature_")]
        expected = ["client_id"] + [f"feature_{i}" for i in range(len(feature_cols))] + ["target"]
        with_truth = header == expected + ["true_cluster"]
        if not with_truth and header != expected:
            raise ParseError(f"{path}: line 1: unexpected header {header}")
        p = len(feature_cols)

        rows = {}
        n_rows = 0
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: line {lineno}: expected {len(header)} columns, got {len(row)}"
                )
            try:
                cid = int(row[0])
                feats = [float(v) for v in row[1 : 1 + p]]
                target = float(row[1 + p])
                truth = int(row[2 + p]) if with_truth else None
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
            entry = rows.setdefault(cid, ([], [], truth))
            if entry[2] != truth:
                raise ParseError(
                    f"{path}: line {lineno}: inconsistent true_cluster for client {cid}"
                )
            entry[0].append(feats)
            entry[1].append(target)
            n_rows += 1
        if n_rows == 0:
            raise ParseError(f"{path}: no data rows")

    return [
        ClientDataset(cid, np.array(feats), np.array(targets), true_cluster=truth)
        for cid, (feats, targets, truth) in sorted(rows.items())
    ]


def train_val_split(
    ds: ClientDataset, frac: float, seed: int
) -> Tuple[ClientDataset, ClientDataset]:
    """Disjoint, covering, deterministic split; ``frac`` goes to training."""
    if ds.n_samples < 2:
        raise ValueError(f"client {ds.client_id}: cannot split {ds.n_samples} sample(s)")
    if not 0 < frac < 1:
        raise ValueError(f"split fraction must be in (0, 1), got {frac}")
    n = ds.n_samples
    n_train = min(max(int(round(frac * n)), 1), n - 1)
    perm = derive_stream(seed, [("client", ds.client_id), ("split", 0)]).generator().permutation(n)
    tr = np.sort(perm[:n_train])
    va = np.sort(perm[n_train:])
    make = lambda idx: ClientDataset(
        ds.client_id, ds.features[idx], ds.targets[idx], true_cluster=ds.true_cluster
    )
    return make(tr), make(va)
