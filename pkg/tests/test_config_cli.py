import json
import math
import os
import subprocess
import sys

import pytest

from fedclust.cli import main
from fedclust.config import CLIP_GRID, load_preset, parse_config
from fedclust.errors import ConfigError
from fedclust.privacy import PrivacyConfig, account


def minimal_config(tmp_path, **overrides):
    cfg = {
        "method": "rr_ifca",
        "k": 2,
        "q": 1.0,
        "rounds": 10,
        "b_min": 3,
        "local_lr": 0.4,
        "local_epochs": 2,
        "batch_size": 16,
        "data": {
            "synthetic": {
                "k": 2,
                "lines": [[1.5, 0.0], [-1.5, 0.0]],
                "noise_std": 0.05,
                "clients_per_cluster": [6, 6],
                "samples_per_client": 16,
            }
        },
        "privacy": None,
        "seeds": [0, 1],
        "eval_every": 5,
        "output": str(tmp_path / "out.csv"),
    }
    cfg.update(overrides)
    return cfg


class TestParseConfig:
    def test_minimal_with_defaults(self, tmp_path):
        cfg = parse_config(minimal_config(tmp_path))
        assert cfg.k == 2
        assert cfg.val_fraction == 0.2
        assert cfg.init_std == 0.1
        assert cfg.train.gamma == 1.0

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown keys"):
            parse_config(minimal_config(tmp_path, bogus=1))

    def test_infeasible_b_names_field(self, tmp_path):
        with pytest.raises(ConfigError, match="b_min"):
            parse_config(minimal_config(tmp_path, b_min=100))

    def test_noise_and_target_mutually_exclusive(self, tmp_path):
        bad = minimal_config(
            tmp_path,
            privacy={"sigma_theta": 1.0, "sigma_s": 1.0, "target_eps": 4.0},
        )
        with pytest.raises(ConfigError, match="not both"):
            parse_config(bad)

    def test_privacy_defaults(self, tmp_path):
        cfg = parse_config(
            minimal_config(tmp_path, privacy={"sigma_theta": 2.0, "sigma_s": 2.0})
        )
        assert cfg.privacy.delta == 1e-3
        assert cfg.privacy.c_s == 0.1

    def test_clip_grid_constant(self):
        assert CLIP_GRID[0] == pytest.approx(0.1)
        assert CLIP_GRID[-1] == pytest.approx(0.001)
        assert len(CLIP_GRID) == 5

    def test_b_requires_rebalancing_method(self, tmp_path):
        with pytest.raises(ConfigError, match="rebalancing"):
            parse_config(minimal_config(tmp_path, method="dp_ifca", b_min=2))

    def test_presets_parse(self):
        for name in ("balanced4", "imbalanced", "bsweep", "epsweep"):
            parse_config(load_preset(name))

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="available"):
            load_preset("nope")

    def test_duplicate_seeds_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="distinct"):
            parse_config(minimal_config(tmp_path, seeds=[0, 0]))

    def test_preset_run_with_overrides(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code = main([
            "run", "--preset", "balanced4",
            "--set", "rounds=0", "--set", "seeds=[3]",
            "--set", 'output="p.csv"',
        ])
        assert code == 0
        assert (tmp_path / "p.csv").exists()


class TestCmdRun:
    def run_cfg(self, tmp_path, cfg):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        code = main(["run", str(path)])
        assert code == 0
        return (tmp_path / "out.csv").read_bytes()

    def test_row_schedule(self, tmp_path, capsys):
        body = self.run_cfg(tmp_path, minimal_config(tmp_path)).decode()
        lines = body.strip().split("\n")
        header = lines[0].split(",")
        assert header[:5] == ["seed", "round", "method", "B", "eps_dp"]
        # 2 seeds x rounds {0, 5, 10}
        assert len(lines) == 1 + 2 * 3

    def test_rerun_byte_identical(self, tmp_path):
        a = self.run_cfg(tmp_path, minimal_config(tmp_path))
        b = self.run_cfg(tmp_path, minimal_config(tmp_path))
        assert a == b

    def test_worker_count_does_not_change_output(self, tmp_path):
        a = self.run_cfg(tmp_path, minimal_config(tmp_path))
        os.environ["FEDCLUST_WORKERS"] = "3"
        try:
            b = self.run_cfg(tmp_path, minimal_config(tmp_path))
        finally:
            del os.environ["FEDCLUST_WORKERS"]
        assert a == b

    def test_eps_column_matches_accountant(self, tmp_path):
        cfg = minimal_config(
            tmp_path,
            q=0.5,
            privacy={"sigma_theta": 2.0, "sigma_s": 2.0, "c_theta": 0.5},
        )
        body = self.run_cfg(tmp_path, cfg).decode()
        row = body.strip().split("\n")[1].split(",")
        eps_csv = float(row[4])
        want = account(
            PrivacyConfig(c_theta=0.5, c_s=0.1, sigma_theta=2.0, sigma_s=2.0,
                          q=0.5, rounds=10, delta=1e-3)
        ).eps_dp
        assert eps_csv == want  # 17-digit serialization is lossless

    def test_nonprivate_eps_is_inf(self, tmp_path):
        body = self.run_cfg(tmp_path, minimal_config(tmp_path)).decode()
        assert body.strip().split("\n")[1].split(",")[4] == "inf"

    def test_sidecar_written(self, tmp_path):
        self.run_cfg(tmp_path, minimal_config(tmp_path))
        sidecar = json.loads((tmp_path / "out.csv.json").read_text())
        assert sidecar["config"]["k"] == 2
        assert sidecar["points"][0]["eps_dp"] is None
        assert "0" in sidecar["points"][0]["final_models"]

    def test_sweep_expands_rows(self, tmp_path):
        cfg = minimal_config(tmp_path, b_min=0, sweep={"b_min": [0, 2, 3]})
        body = self.run_cfg(tmp_path, cfg).decode()
        lines = body.strip().split("\n")[1:]
        assert len(lines) == 3 * 2 * 3  # points x seeds x eval rounds
        b_vals = sorted({line.split(",")[3] for line in lines})
        assert b_vals == ["0", "2", "3"]


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"method": "nope", "data": {"csv_path": "x"}}))
        assert main(["run", str(path)]) == 2

    def test_missing_file_is_2(self):
        assert main(["run", "/nonexistent/cfg.json"]) == 2

    def test_runtime_error_is_3(self, capsys):
        # unreachable calibration target
        assert main([
            "calibrate", "--target-eps", "1e-9", "--q", "0.5", "--rounds", "500",
        ]) == 3


class TestCalculatorCommands:
    def test_account_json(self, capsys):
        code = main([
            "account", "--q", "0.1", "--rounds", "200",
            "--sigma-theta", "4", "--sigma-s", "4", "--delta", "1e-3",
        ])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["eps"] == pytest.approx(5.1744284442615201, rel=1e-9)
        assert out["best_alpha"] == 4

    def test_calibrate_round_trip(self, capsys):
        assert main(["calibrate", "--target-eps", "4", "--q", "0.1", "--rounds", "200"]) == 0
        out = json.loads(capsys.readouterr().out)
        got = account(
            PrivacyConfig(c_theta=1.0, c_s=0.1, sigma_theta=out["sigma_theta"],
                          sigma_s=out["sigma_s"], q=0.1, rounds=200, delta=1e-3)
        ).eps_dp
        assert abs(got - 4.0) <= 0.004

    def test_bounds_tau_vanishing(self, capsys):
        code = main([
            "bounds", "--strong-convexity", "0.5", "--smoothness", "2",
            "--loss-variance", "0", "--grad-variance", "0", "--size-variance", "0",
            "--separation-slack", "0.25", "--separation", "2",
            "--n-clients", "64", "--n-clusters", "4", "--b-min", "4",
            "--sigma-s", "0", "--sigma-theta", "0", "--fail-prob", "0.05",
            "--dim", "2",
        ])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["tau"] == 0.0
        assert out["eps_floor"] == 0.0
        assert not out["vacuous"]


class TestInstalledEntryPoint:
    def test_console_script(self):
        proc = subprocess.run(
            [sys.executable, "-m", "fedclust.cli", "account", "--q", "0", "--rounds", "5",
             "--sigma-theta", "1", "--sigma-s", "1"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        out = json.loads(proc.stdout)
        assert out["best_alpha"] == 256
