"""Experiment configuration: strict JSON parsing, defaults, shipped presets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .datasets import SyntheticSpec
from .errors import ConfigError
from .privacy import DEFAULT_DELTA, PrivacyConfig
from .simulation import Method, TrainConfig

#: Clipping-bound search grid for tuning runs: 1e-1 .. 1e-3 in 5 log steps.
CLIP_GRID: Tuple[float, ...] = tuple(float(c) for c in np.logspace(-1, -3, 5))

DEFAULT_C_S = 0.1


@dataclass(frozen=True)
class PrivacySpec:
    """Either explicit noise multipliers or a calibration target, never both."""

    c_theta: float = 0.1
    c_s: float = DEFAULT_C_S
    delta: float = DEFAULT_DELTA
    sigma_theta: Optional[float] = None
    sigma_s: Optional[float] = None
    target_eps: Optional[float] = None
    split_ratio: float = 0.5

    def __post_init__(self) -> None:
        explicit = self.sigma_theta is not None or self.sigma_s is not None
        if explicit and self.target_eps is not None:
            raise ConfigError(
                "privacy: give either sigma_theta/sigma_s or target_eps, not both"
            )
        if not explicit and self.target_eps is None:
            raise ConfigError(
                "privacy: one of sigma_theta/sigma_s or target_eps is required"
            )
        if explicit and (self.sigma_theta is None or self.sigma_s is None):
            raise ConfigError("privacy: sigma_theta and sigma_s must be given together")


@dataclass(frozen=True)
class ExperimentConfig:
    method: Method
    k: int
    q: float
    rounds: int
    b_min: int
    train: TrainConfig
    synthetic: Optional[SyntheticSpec]
    csv_path: Optional[str]
    privacy: Optional[PrivacySpec]  # None = non-private
    seeds: Tuple[int, ...]
    eval_every: int
    output: str
    val_fraction: float = 0.2
    init_std: float = 0.1
    data_out: Optional[str] = None
    sweep: Optional[Tuple[str, Tuple[float, ...]]] = None

    def __post_init__(self) -> None:
        if (self.synthetic is None) == (self.csv_path is None):
            raise ConfigError("data: exactly one of synthetic spec or csv path")
        if not self.seeds:
            raise ConfigError("seeds must be a nonempty list")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.method is Method.DP_FEDAVG and self.k != 1:
            raise ConfigError("method dp_fedavg requires k = 1")
        if not 0 < self.q <= 1:
            raise ConfigError(f"q must lie in (0, 1], got {self.q}")
        if self.rounds < 0:
            raise ConfigError(f"rounds must be nonnegative, got {self.rounds}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.b_min < 0:
            raise ConfigError(f"b_min must be nonnegative, got {self.b_min}")
        if self.b_min > 0 and not self.method.uses_rebalance:
            raise ConfigError(f"b_min > 0 requires a rebalancing method, got {self.method.value}")
        if not 0 < self.val_fraction < 1:
            raise ConfigError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        if self.init_std < 0:
            raise ConfigError(f"init_std must be nonnegative, got {self.init_std}")
        if self.synthetic is not None:
            self._check_b(self.b_min, self.synthetic.n_clients)

    def _check_b(self, b: int, m: int) -> None:
        cap = int(round(self.q * m)) // self.k
        if b > cap:
            raise ConfigError(
                f"b_min={int(b)} exceeds floor(round(q*M)/k)={cap} "
                f"(q={self.q}, M={m}, k={self.k})"
            )

    def sweep_points(self) -> List[Dict[str, float]]:
        """Expand the optional one-key sweep into per-run overrides."""
        if self.sweep is None:
            return [{}]
        key, values = self.sweep
        return [{key: v} for v in values]


def _pop(obj: Dict[str, Any], key: str, default=None):
    return obj.pop(key) if key in obj else default


def _reject_unknown(obj: Dict[str, Any], where: str) -> None:
    if obj:
        raise ConfigError(f"{where}: unknown keys {sorted(obj)}")


def _parse_privacy(obj) -> Optional[PrivacySpec]:
    if obj is None:
        return None
    if not isinstance(obj, dict):
        raise ConfigError("privacy must be an object or null")
    obj = dict(obj)
    spec = PrivacySpec(
        c_theta=float(_pop(obj, "c_theta", 0.1)),
        c_s=float(_pop(obj, "c_s", DEFAULT_C_S)),
        delta=float(_pop(obj, "delta", DEFAULT_DELTA)),
        sigma_theta=_pop(obj, "sigma_theta"),
        sigma_s=_pop(obj, "sigma_s"),
        target_eps=_pop(obj, "target_eps"),
        split_ratio=float(_pop(obj, "split_ratio", 0.5)),
    )
    _reject_unknown(obj, "privacy")
    return spec


def _parse_data(obj) -> Tuple[Optional[SyntheticSpec], Optional[str]]:
    if not isinstance(obj, dict):
        raise ConfigError("data must be an object")
    obj = dict(obj)
    synthetic = _pop(obj, "synthetic")
    csv_path = _pop(obj, "csv_path")
    _reject_unknown(obj, "data")
    if synthetic is not None:
        synthetic = dict(synthetic)
        spec = SyntheticSpec(
            k=int(_pop(synthetic, "k")),
            lines=tuple(tuple(line) for line in _pop(synthetic, "lines")),
            noise_std=float(_pop(synthetic, "noise_std")),
            clients_per_cluster=tuple(_pop(synthetic, "clients_per_cluster")),
            samples_per_client=int(_pop(synthetic, "samples_per_client", 20)),
            x_range=tuple(_pop(synthetic, "x_range", (-1.0, 1.0))),
        )
        _reject_unknown(synthetic, "data.synthetic")
        return spec, None
    if csv_path is None:
        raise ConfigError("data: one of synthetic or csv_path is required")
    return None, str(csv_path)


_SWEEPABLE = ("b_min", "target_eps")


def parse_config(obj: Dict[str, Any]) -> ExperimentConfig:
    """Validate a raw JSON object into an ExperimentConfig (strict keys)."""
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")
    obj = dict(obj)
    try:
        method = Method(str(_pop(obj, "method", "rr_ifca")))
    except ValueError:
        raise ConfigError(
            f"unknown method; choose from {[m.value for m in Method]}"
        ) from None
    train = TrainConfig(
        gamma=float(_pop(obj, "gamma", 1.0)),
        local_lr=float(_pop(obj, "local_lr", 0.1)),
        local_epochs=int(_pop(obj, "local_epochs", 1)),
        batch_size=int(_pop(obj, "batch_size", 32)),
        model_family=str(_pop(obj, "model_family", "linear_regression_mse")),
    )
    if "data" not in obj:
        raise ConfigError("config requires a data section")
    synthetic, csv_path = _parse_data(_pop(obj, "data"))
    privacy = _parse_privacy(_pop(obj, "privacy"))

    sweep = _pop(obj, "sweep")
    if sweep is not None:
        sweep = dict(sweep)
        if len(sweep) != 1 or next(iter(sweep)) not in _SWEEPABLE:
            raise ConfigError(f"sweep must hold exactly one of {_SWEEPABLE}")
        key, values = next(iter(sweep.items()))
        if key == "target_eps" and (privacy is None or privacy.target_eps is None):
            raise ConfigError("sweep over target_eps requires a calibration privacy block")
        sweep = (key, tuple(float(v) for v in values))

    cfg = ExperimentConfig(
        method=method,
        k=int(_pop(obj, "k", 1)),
        q=float(_pop(obj, "q", 1.0)),
        rounds=int(_pop(obj, "rounds", 10)),
        b_min=int(_pop(obj, "b_min", 0)),
        train=train,
        synthetic=synthetic,
        csv_path=csv_path,
        privacy=privacy,
        seeds=tuple(int(s) for s in _pop(obj, "seeds", [0])),
        eval_every=int(_pop(obj, "eval_every", 1)),
        output=str(_pop(obj, "output", "results.csv")),
        val_fraction=float(_pop(obj, "val_fraction", 0.2)),
        init_std=float(_pop(obj, "init_std", 0.1)),
        data_out=_pop(obj, "data_out"),
        sweep=sweep,
    )
    _reject_unknown(obj, "config")

    if cfg.sweep is not None and cfg.sweep[0] == "b_min" and cfg.synthetic is not None:
        for b in cfg.sweep[1]:
            cfg._check_b(int(b), cfg.synthetic.n_clients)
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(raw)


def load_preset(name: str) -> Dict[str, Any]:
    """Raw JSON object of a shipped preset configuration."""
    ref = resources.files("fedclust").joinpath(f"presets/{name}.json")
    if not ref.is_file():
        available = sorted(
            p.name[: -len(".json")]
            for p in resources.files("fedclust").joinpath("presets").iterdir()
            if p.name.endswith(".json")
        )
        raise ConfigError(f"unknown preset {name!r}; available: {available}")
    return json.loads(ref.read_text(encoding="utf-8"))


def resolve_noise(
    spec: Optional[PrivacySpec], q: float, rounds: int
) -> Tuple[float, float, Optional[PrivacyConfig]]:
    """Resolve a privacy spec into (sigma_theta, sigma_s, accounting config).

    Non-private runs return zero multipliers and no accounting config.
    Calibration targets are inverted through the accountant here.
    """
    from .privacy import calibrate

    if spec is None:
        return 0.0, 0.0, None
    if spec.target_eps is not None:
        sigma_theta, sigma_s = calibrate(
            spec.target_eps, spec.delta, q, rounds,
            ratio=spec.split_ratio, c_theta=spec.c_theta, c_s=spec.c_s,
        )
    else:
        sigma_theta, sigma_s = spec.sigma_theta, spec.sigma_s
    cfg = PrivacyConfig(
        c_theta=spec.c_theta,
        c_s=spec.c_s,
        sigma_theta=float(sigma_theta),
        sigma_s=float(sigma_s),
        q=q,
        rounds=rounds,
        delta=spec.delta,
    )
    return float(sigma_theta), float(sigma_s), cfg
