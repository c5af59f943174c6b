import math

import numpy as np
import pytest

from fedclust.datasets import SyntheticSpec, gen_synthetic
from fedclust.errors import ConfigError
from fedclust.models import get_family, squared_error_grad
from fedclust.privacy import PrivacyConfig
from fedclust.simulation import (
    FederationState,
    Method,
    TrainConfig,
    init_state,
    local_train,
    run_experiment,
    run_round,
    sample_clients,
)
from fedclust.streams import derive_stream
from fedclust.datasets import ClientDataset

from oracles import least_squares_line


def stream(seed=0, label="t", index=0):
    return derive_stream(seed, [(label, index)])


def nonprivate(q=1.0, rounds=10):
    return PrivacyConfig(
        c_theta=math.inf, c_s=0.1, sigma_theta=0.0, sigma_s=0.0, q=q, rounds=rounds
    )


def line_spec(**kw):
    base = dict(
        k=2,
        lines=[(1.5, 0.0), (-1.5, 0.5)],
        noise_std=0.02,
        clients_per_cluster=[6, 6],
        samples_per_client=16,
    )
    base.update(kw)
    return SyntheticSpec(**base)


class TestSampleClients:
    def test_full_participation(self):
        assert sample_clients(10, 1.0, stream()) == tuple(range(10))

    def test_exact_count(self):
        picks = sample_clients(100, 0.1, stream(3))
        assert len(picks) == 10
        assert len(set(picks)) == 10

    def test_deterministic(self):
        assert sample_clients(50, 0.3, stream(7)) == sample_clients(50, 0.3, stream(7))

    def test_zero_sample_rejected(self):
        with pytest.raises(ConfigError):
            sample_clients(100, 0.001, stream())


class TestLocalTrain:
    def test_slope_only_hand_arithmetic(self):
        # one point (x=1, y=2), squared error without 1/2, theta = 0:
        # grad = 2 (theta - y x) x = -4; one step at lr 0.25 lands on 1
        grad = squared_error_grad(np.array([0.0]), np.array([[1.0]]), np.array([2.0]))
        assert grad == pytest.approx(-4.0)
        assert 0.0 - 0.25 * grad == pytest.approx(1.0)

    def test_one_step_with_intercept(self):
        ds = ClientDataset(0, np.array([[1.0]]), np.array([2.0]))
        cfg = TrainConfig(local_lr=0.25, local_epochs=1, batch_size=8)
        theta = local_train(ds, np.zeros(2), cfg, stream())
        np.testing.assert_allclose(theta, [1.0, 1.0])

    def test_zero_lr_returns_start(self):
        ds = ClientDataset(0, np.array([[1.0], [2.0]]), np.array([2.0, 4.0]))
        start = np.array([0.3, -0.7])
        cfg = TrainConfig(local_lr=0.0, local_epochs=3, batch_size=2)
        np.testing.assert_array_equal(local_train(ds, start, cfg, stream()), start)

    def test_converges_to_least_squares(self):
        data = gen_synthetic(line_spec(noise_std=0.0), seed=4)
        ds = data[0]
        cfg = TrainConfig(local_lr=0.4, local_epochs=300, batch_size=64)
        theta = local_train(ds, np.zeros(2), cfg, stream())
        slope, intercept = least_squares_line(ds.features[:, 0], ds.targets)
        assert theta[0] == pytest.approx(slope, abs=1e-3)
        assert theta[1] == pytest.approx(intercept, abs=1e-3)


class TestRunRound:
    def test_single_cluster_noiseless_is_fedavg_mean(self):
        data = gen_synthetic(line_spec(), seed=1)
        cfg = TrainConfig(local_lr=0.3, local_epochs=1, batch_size=16)
        family = get_family(cfg.model_family)
        state = init_state(Method.RR_IFCA, 1, 2, rng_root=9, init_std=0.0)
        state2, record = run_round(state, data, cfg, nonprivate(), b_min=0)

        deltas = []
        for i, ds in enumerate(data):
            rng = derive_stream(9, [("round", 0), ("client", i), ("train", 0)])
            theta = local_train(ds, np.zeros(2), cfg, rng, family)
            deltas.append(theta)
        np.testing.assert_allclose(state2.cluster_models[0], np.mean(deltas, axis=0))
        assert record.sizes_post == (len(data),)

    def test_matches_dp_fedavg_when_noiseless(self):
        data = gen_synthetic(line_spec(), seed=2)
        cfg = TrainConfig(local_lr=0.3, local_epochs=2, batch_size=8)
        s_rr = init_state(Method.RR_IFCA, 1, 2, rng_root=3, init_std=0.1)
        s_fa = init_state(Method.DP_FEDAVG, 1, 2, rng_root=3, init_std=0.1)
        for _ in range(5):
            s_rr, _ = run_round(s_rr, data, cfg, nonprivate(), b_min=0)
            s_fa, _ = run_round(s_fa, data, cfg, nonprivate(), b_min=0)
        np.testing.assert_array_equal(s_rr.cluster_models, s_fa.cluster_models)

    def test_rebalance_fills_empty_groups(self):
        data = gen_synthetic(line_spec(), seed=3)
        cfg = TrainConfig(local_lr=0.3, local_epochs=1, batch_size=16)
        # all-equal initial models: every client picks cluster 0
        state = init_state(Method.RR_IFCA, 3, 2, rng_root=1, init_std=0.0)
        _, record = run_round(state, data, cfg, nonprivate(), b_min=3)
        assert record.sizes_pre == (12, 0, 0)
        assert record.sizes_post == (6, 3, 3)
        assert record.n_donors == 6

    def test_round_is_deterministic(self):
        data = gen_synthetic(line_spec(), seed=5)
        cfg = TrainConfig(local_lr=0.2, local_epochs=2, batch_size=4)
        priv = PrivacyConfig(c_theta=0.5, c_s=0.1, sigma_theta=1.0, sigma_s=1.0,
                             q=0.5, rounds=10)
        state = init_state(Method.RR_IFCA, 2, 2, rng_root=11, init_std=0.1)
        a, rec_a = run_round(state, data, cfg, priv, b_min=2)
        b, rec_b = run_round(state, data, cfg, priv, b_min=2)
        np.testing.assert_array_equal(a.cluster_models, b.cluster_models)
        assert rec_a == rec_b

    def test_effective_noise_capped_by_b(self):
        data = gen_synthetic(line_spec(clients_per_cluster=[10, 10]), seed=6)
        cfg = TrainConfig(local_lr=0.2, local_epochs=1, batch_size=16)
        priv = PrivacyConfig(c_theta=0.5, c_s=0.1, sigma_theta=2.0, sigma_s=0.5,
                             q=1.0, rounds=10)
        state = init_state(Method.RR_IFCA, 4, 2, rng_root=2, init_std=0.1)
        for _ in range(5):
            state, record = run_round(state, data, cfg, priv, b_min=4)
            cap = 2 * 0.5 * 2.0 / 4
            assert all(e <= cap + 1e-12 for e in record.effective_noise_std)

    def test_frozen_cluster_keeps_model(self):
        data = gen_synthetic(line_spec(), seed=7)
        cfg = TrainConfig(local_lr=0.3, local_epochs=1, batch_size=16)
        state = init_state(Method.DP_IFCA, 3, 2, rng_root=1, init_std=0.0)
        state2, record = run_round(state, data, cfg, nonprivate(), b_min=0)
        assert record.sizes_post == (12, 0, 0)
        np.testing.assert_array_equal(state2.cluster_models[1], state.cluster_models[1])
        np.testing.assert_array_equal(state2.cluster_models[2], state.cluster_models[2])

    def test_fesem_distance_assignment(self):
        data = gen_synthetic(line_spec(), seed=8)
        cfg = TrainConfig(local_lr=0.4, local_epochs=4, batch_size=16)
        state = FederationState(
            np.array([[1.5, 0.0], [-1.5, 0.5]]), 0, Method.RR_FESEM, rng_root=4
        )
        _, record = run_round(state, data, cfg, nonprivate(), b_min=0)
        # locally trained models sit near the true lines, so distance decoding
        # recovers the ground-truth split
        assert record.sizes_pre == (6, 6)


class TestRunExperiment:
    def test_zero_rounds_only_initial_eval(self):
        data = gen_synthetic(line_spec(), seed=0)
        cfg = TrainConfig(local_lr=0.3, local_epochs=1, batch_size=16)
        hist = run_experiment(data, Method.RR_IFCA, 2, cfg, nonprivate(), 0, 0, seed=0)
        assert len(hist.rows) == 1
        assert hist.rows[0].round == 0
        assert hist.final_models is not None

    def test_eval_schedule(self):
        data = gen_synthetic(line_spec(), seed=0)
        cfg = TrainConfig(local_lr=0.3, local_epochs=1, batch_size=16)
        hist = run_experiment(
            data, Method.RR_IFCA, 2, cfg, nonprivate(), 0, 10, seed=0, eval_every=5
        )
        assert [r.round for r in hist.rows] == [0, 5, 10]

    def test_prefix_property(self):
        data = gen_synthetic(line_spec(), seed=0)
        cfg = TrainConfig(local_lr=0.3, local_epochs=1, batch_size=16)
        short = run_experiment(
            data, Method.RR_IFCA, 2, cfg, nonprivate(), 1, 10, seed=3, eval_every=5
        )
        long = run_experiment(
            data, Method.RR_IFCA, 2, cfg, nonprivate(), 1, 20, seed=3, eval_every=5
        )
        assert long.rows[: len(short.rows)] == short.rows

    def test_learns_two_lines(self):
        data = gen_synthetic(line_spec(), seed=12)
        cfg = TrainConfig(local_lr=0.4, local_epochs=3, batch_size=16)
        hist = run_experiment(
            data, Method.RR_IFCA, 2, cfg, nonprivate(), b_min=3, rounds=60, seed=1
        )
        assert hist.rows[-1].clustering_accuracy == 1.0
        slopes = sorted(hist.final_models[:, 0])
        assert slopes[0] == pytest.approx(-1.5, abs=0.05)
        assert slopes[1] == pytest.approx(1.5, abs=0.05)
