"""Command-line entry points: run experiments, account, calibrate, bounds.

Exit codes: 0 success, 2 configuration error, 3 runtime error. The only
environment knob is FEDCLUST_WORKERS (process count for parallel seeds);
everything else lives in the JSON config.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional, Tuple

from . import bounds as bounds_mod
from .config import (
    ExperimentConfig,
    PrivacySpec,
    load_config,
    load_preset,
    parse_config,
    resolve_noise,
)
from .datasets import gen_synthetic, load_csv, write_csv
from .errors import CalibrationError, ConfigError, InsufficientNoiseError, ParseError
from .privacy import DEFAULT_DELTA, PrivacyConfig, account, calibrate
from .simulation import run_experiment

CSV_COLUMNS = (
    "seed",
    "round",
    "method",
    "B",
    "eps_dp",
    "sigma_theta",
    "sigma_s",
    "train_loss",
    "val_loss",
    "val_accuracy",
    "clustering_accuracy",
    "min_group_size",
    "max_group_size",
    "donors_this_round",
    "collapsed_clusters",
)

_FLOAT_FMT = "%.17g"


def _fmt(value) -> str:
    if isinstance(value, float):
        return _FLOAT_FMT % value
    return str(value)


def _n_workers() -> int:
    raw = os.environ.get("FEDCLUST_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"FEDCLUST_WORKERS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"FEDCLUST_WORKERS must be >= 1, got {n}")
    return n


def _apply_point(cfg: ExperimentConfig, point: Dict[str, float]) -> ExperimentConfig:
    """Apply one sweep override (b_min or target_eps) to the base config."""
    if not point:
        return cfg
    key, value = next(iter(point.items()))
    if key == "b_min":
        return dataclasses.replace(cfg, b_min=int(value), sweep=None)
    if key == "target_eps":
        privacy = dataclasses.replace(cfg.privacy, target_eps=float(value))
        return dataclasses.replace(cfg, privacy=privacy, sweep=None)
    raise ConfigError(f"unsupported sweep key {key!r}")


def _seed_run(args: Tuple[ExperimentConfig, PrivacyConfig, int]):
    cfg, sim_priv, seed = args
    if cfg.synthetic is not None:
        datasets = gen_synthetic(cfg.synthetic, seed)
    else:
        datasets = load_csv(cfg.csv_path)
    history = run_experiment(
        datasets,
        cfg.method,
        cfg.k,
        cfg.train,
        sim_priv,
        b_min=cfg.b_min,
        rounds=cfg.rounds,
        seed=seed,
        eval_every=cfg.eval_every,
        val_fraction=cfg.val_fraction,
        init_std=cfg.init_std,
    )
    return seed, history


def _run_point(
    cfg: ExperimentConfig, workers: int
) -> Tuple[List[Dict[str, Any]], Dict[str, Any]]:
    """Execute all seeds of one resolved config; returns rows + report."""
    sigma_theta, sigma_s, acct_cfg = resolve_noise(cfg.privacy, cfg.q, max(cfg.rounds, 1))
    if acct_cfg is None:
        eps_dp, best_alpha = math.inf, None
    elif cfg.rounds == 0:
        eps_dp, best_alpha = 0.0, None  # nothing released
    else:
        result = account(acct_cfg)
        eps_dp, best_alpha = result.eps_dp, result.best_alpha

    sim_priv = PrivacyConfig(
        c_theta=cfg.privacy.c_theta if cfg.privacy else math.inf,
        c_s=cfg.privacy.c_s if cfg.privacy else 0.1,
        sigma_theta=sigma_theta,
        sigma_s=sigma_s,
        q=cfg.q,
        rounds=max(cfg.rounds, 1),
        delta=cfg.privacy.delta if cfg.privacy else DEFAULT_DELTA,
    )

    jobs = [(cfg, sim_priv, seed) for seed in cfg.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_seed_run, jobs))
    else:
        results = [_seed_run(job) for job in jobs]

    rows = []
    final_models = {}
    for seed, history in sorted(results, key=lambda r: r[0]):
        final_models[str(seed)] = [list(map(float, m)) for m in history.final_models]
        for row in history.rows:
            rows.append(
                {
                    "seed": seed,
                    "round": row.round,
                    "method": cfg.method.value,
                    "B": cfg.b_min,
                    "eps_dp": eps_dp,
                    "sigma_theta": sigma_theta,
                    "sigma_s": sigma_s,
                    "train_loss": row.train_loss,
                    "val_loss": row.val_loss,
                    "val_accuracy": row.val_accuracy,
                    "clustering_accuracy": row.clustering_accuracy,
                    "min_group_size": row.min_group_size,
                    "max_group_size": row.max_group_size,
                    "donors_this_round": row.donors_this_round,
                    "collapsed_clusters": row.collapsed_clusters,
                }
            )
    report = {
        "b_min": cfg.b_min,
        "target_eps": cfg.privacy.target_eps if cfg.privacy else None,
        "sigma_theta": sigma_theta,
        "sigma_s": sigma_s,
        "eps_dp": None if math.isinf(eps_dp) else eps_dp,
        "best_alpha": best_alpha,
        "final_models": final_models,
    }
    return rows, report


def cmd_run(args) -> int:
    if args.preset:
        raw = load_preset(args.preset)
    else:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    for override in args.set or []:
        key, _, value = override.partition("=")
        if not _:
            raise ConfigError(f"--set expects key=value, got {override!r}")
        raw[key] = json.loads(value)
    cfg = parse_config(raw)
    workers = _n_workers()

    all_rows: List[Dict[str, Any]] = []
    reports = []
    for idx, point in enumerate(cfg.sweep_points()):
        point_cfg = _apply_point(cfg, point)
        rows, report = _run_point(point_cfg, workers)
        for row in rows:
            row["_sweep"] = idx
        all_rows.extend(rows)
        reports.append(report)

    all_rows.sort(key=lambda r: (r["_sweep"], r["seed"], r["round"]))
    with open(cfg.output, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in all_rows:
            fh.write(",".join(_fmt(row[c]) for c in CSV_COLUMNS) + "\n")

    if cfg.data_out and cfg.synthetic is not None:
        write_csv(gen_synthetic(cfg.synthetic, cfg.seeds[0]), cfg.data_out)

    sidecar = {
        "config": _config_as_json(cfg),
        "points": reports,
        "csv_columns": list(CSV_COLUMNS),
    }
    with open(cfg.output + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(cfg.output)
    return 0


def _config_as_json(cfg: ExperimentConfig) -> Dict[str, Any]:
    out: Dict[str, Any] = {
        "method": cfg.method.value,
        "k": cfg.k,
        "q": cfg.q,
        "rounds": cfg.rounds,
        "b_min": cfg.b_min,
        "gamma": cfg.train.gamma,
        "local_lr": cfg.train.local_lr,
        "local_epochs": cfg.train.local_epochs,
        "batch_size": cfg.train.batch_size,
        "model_family": cfg.train.model_family,
        "seeds": list(cfg.seeds),
        "eval_every": cfg.eval_every,
        "output": cfg.output,
        "val_fraction": cfg.val_fraction,
        "init_std": cfg.init_std,
    }
    if cfg.synthetic is not None:
        out["data"] = {
            "synthetic": {
                "k": cfg.synthetic.k,
                "lines": [list(line) for line in cfg.synthetic.lines],
                "noise_std": cfg.synthetic.noise_std,
                "clients_per_cluster": list(cfg.synthetic.clients_per_cluster),
                "samples_per_client": cfg.synthetic.samples_per_client,
                "x_range": list(cfg.synthetic.x_range),
            }
        }
    else:
        out["data"] = {"csv_path": cfg.csv_path}
    if cfg.privacy is not None:
        out["privacy"] = {
            k: v
            for k, v in dataclasses.asdict(cfg.privacy).items()
            if v is not None
        }
    else:
        out["privacy"] = None
    if cfg.sweep is not None:
        out["sweep"] = {cfg.sweep[0]: list(cfg.sweep[1])}
    if cfg.data_out:
        out["data_out"] = cfg.data_out
    return out


def cmd_account(args) -> int:
    cfg = PrivacyConfig(
        c_theta=args.c_theta,
        c_s=args.c_s,
        sigma_theta=args.sigma_theta,
        sigma_s=args.sigma_s,
        q=args.q,
        rounds=args.rounds,
        delta=args.delta,
    )
    result = account(cfg)
    print(json.dumps({"eps": result.eps_dp, "best_alpha": result.best_alpha}))
    return 0


def cmd_calibrate(args) -> int:
    sigma_theta, sigma_s = calibrate(
        args.target_eps, args.delta, args.q, args.rounds, ratio=args.split_ratio
    )
    print(json.dumps({"sigma_theta": sigma_theta, "sigma_s": sigma_s}))
    return 0


def cmd_bounds(args) -> int:
    params = bounds_mod.AnalysisParams(
        strong_convexity=args.strong_convexity,
        smoothness=args.smoothness,
        loss_variance=args.loss_variance,
        grad_variance=args.grad_variance,
        size_variance=args.size_variance,
        grad_norm_bound=args.grad_norm_bound,
        separation_slack=args.separation_slack,
        init_slack=args.init_slack,
        separation=args.separation,
        n_clients=args.n_clients,
        n_clusters=args.n_clusters,
        b_min=args.b_min,
        gamma=args.gamma,
        sigma_s=args.sigma_s,
        sigma_theta=args.sigma_theta,
        c_theta=args.c_theta,
        fail_prob=args.fail_prob,
        dim=args.dim,
    )
    tau = bounds_mod.tau_bound(params)
    out: Dict[str, Any] = {"tau": tau}
    if params.b_min >= 1:
        bound = bounds_mod.contraction_params(params)
        out.update(
            {
                "contraction": bound.contraction,
                "eps_floor": None if bound.vacuous else bound.eps_floor,
                "vacuous": bound.vacuous,
            }
        )
        if args.eps_target is not None and not bound.vacuous:
            out["rounds_to_target"] = bounds_mod.rounds_to_accuracy(params, args.eps_target)
    print(json.dumps(out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedclust",
        description="Differentially private federated clustering simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment config, write results CSV")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("config", nargs="?", help="path to a JSON experiment config")
    src.add_argument("--preset", help="name of a shipped preset config")
    run.add_argument(
        "--set", action="append", metavar="KEY=JSON",
        help="override a single top-level config key (repeatable)",
    )
    run.set_defaults(func=cmd_run)

    acct = sub.add_parser("account", help="total (eps, delta)-DP of a run")
    acct.add_argument("--q", type=float, required=True)
    acct.add_argument("--rounds", type=int, required=True)
    acct.add_argument("--sigma-theta", dest="sigma_theta", type=float, required=True)
    acct.add_argument("--sigma-s", dest="sigma_s", type=float, required=True)
    acct.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    acct.add_argument("--c-theta", dest="c_theta", type=float, default=0.1)
    acct.add_argument("--c-s", dest="c_s", type=float, default=0.1)
    acct.set_defaults(func=cmd_account)

    cal = sub.add_parser("calibrate", help="noise multipliers for a target epsilon")
    cal.add_argument("--target-eps", dest="target_eps", type=float, required=True)
    cal.add_argument("--q", type=float, required=True)
    cal.add_argument("--rounds", type=int, required=True)
    cal.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    cal.add_argument("--split-ratio", dest="split_ratio", type=float, default=0.5)
    cal.set_defaults(func=cmd_calibrate)

    bnd = sub.add_parser("bounds", help="misassignment and contraction calculators")
    bnd.add_argument("--strong-convexity", type=float, required=True)
    bnd.add_argument("--smoothness", type=float, required=True)
    bnd.add_argument("--loss-variance", type=float, required=True)
    bnd.add_argument("--grad-variance", type=float, required=True)
    bnd.add_argument("--size-variance", type=float, required=True)
    bnd.add_argument("--grad-norm-bound", type=float, default=1.0)
    bnd.add_argument("--separation-slack", type=float, required=True)
    bnd.add_argument("--init-slack", type=float, default=0.25)
    bnd.add_argument("--separation", type=float, required=True)
    bnd.add_argument("--n-clients", type=int, required=True)
    bnd.add_argument("--n-clusters", type=int, required=True)
    bnd.add_argument("--b-min", type=int, required=True)
    bnd.add_argument("--gamma", type=float, default=1.0)
    bnd.add_argument("--sigma-s", type=float, required=True)
    bnd.add_argument("--sigma-theta", type=float, required=True)
    bnd.add_argument("--c-theta", type=float, default=0.1)
    bnd.add_argument("--fail-prob", type=float, required=True)
    bnd.add_argument("--dim", type=int, required=True)
    bnd.add_argument("--eps-target", type=float, default=None)
    bnd.set_defaults(func=cmd_bounds)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigError, ParseError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CalibrationError, InsufficientNoiseError, ValueError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
