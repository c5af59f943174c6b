import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import norm

from fedclust.datasets import ClientDataset
from fedclust.engine import (
    Move,
    RoundAssignment,
    aggregate_cluster,
    assign_by_distance,
    assign_by_loss,
    decode_identifiers,
    one_hot,
    privatize_identifier,
    rebalance,
    server_update,
)
from fedclust.errors import ConfigError
from fedclust.models import LINEAR_REGRESSION, design_matrix
from fedclust.streams import derive_stream


def stream(seed=0, label="t", index=0):
    return derive_stream(seed, [(label, index)])


def linreg_loss(theta, client):
    return LINEAR_REGRESSION.loss(theta, design_matrix(client.features), client.targets)


class TestAssignByLoss:
    def client_on_line(self, slope, n=12):
        x = np.linspace(-1, 1, n)
        return ClientDataset(0, x.reshape(-1, 1), slope * x)

    def test_zero_loss_model_wins(self):
        client = self.client_on_line(2.0)
        models = [np.array([2.0, 0.0]), np.array([0.0, 0.0])]
        np.testing.assert_array_equal(assign_by_loss(client, models, linreg_loss), [1, 0])

    def test_tie_breaks_to_smallest(self):
        client = self.client_on_line(1.0)
        models = [np.zeros(2), np.zeros(2), np.zeros(2)]
        np.testing.assert_array_equal(
            assign_by_loss(client, models, linreg_loss), [1, 0, 0]
        )

    def test_single_model(self):
        client = self.client_on_line(-1.0)
        np.testing.assert_array_equal(
            assign_by_loss(client, [np.zeros(2)], linreg_loss), [1]
        )


class TestAssignByDistance:
    def test_nearest_model(self):
        s = assign_by_distance(np.array([1.0, 0.0]),
                               [np.array([1.0, 0.0]), np.array([5.0, 5.0])])
        np.testing.assert_array_equal(s, [1, 0])

    def test_equidistant_tie(self):
        s = assign_by_distance(np.zeros(2), [np.array([1.0, 0.0]), np.array([-1.0, 0.0])])
        np.testing.assert_array_equal(s, [1, 0])

    def test_single_model(self):
        np.testing.assert_array_equal(assign_by_distance(np.ones(2), [np.zeros(2)]), [1])


class TestPrivatizeIdentifier:
    def test_zero_noise_keeps_argmax(self):
        s = one_hot(2, 4)
        out = privatize_identifier(s, 0.1, 0.0, stream())
        assert int(np.argmax(out)) == 2
        np.testing.assert_allclose(out, 0.1 * s)

    def test_clip_scale_invariance_of_argmax(self):
        # c_s <= 1 gives s~ = c_s (s + N(0, sigma^2)): decoded argmax must not
        # depend on c_s when the noise stream is shared
        for trial in range(50):
            rng = stream(7, "trial", trial)
            s = one_hot(trial % 4, 4)
            a = privatize_identifier(s, 0.1, 0.5, rng)
            b = privatize_identifier(s, 1.0, 0.5, rng)
            assert int(np.argmax(a)) == int(np.argmax(b))

    def test_flip_rate_matches_quadrature_oracle(self):
        # P(argmax correct) = E_z[ Phi(z + 1/sigma)^(k-1) ], independent
        # quadrature on the exact integral
        sigma, k, n = 0.5, 4, 100_000
        exact, _ = quad(
            lambda z: norm.pdf(z) * norm.cdf(z + 1.0 / sigma) ** (k - 1), -12, 12
        )
        s = one_hot(1, k)
        hits = 0
        for i in range(n):
            out = privatize_identifier(s, 0.1, sigma, stream(3, "mc", i))
            hits += int(np.argmax(out)) == 1
        assert abs(hits / n - exact) < 0.01

    def test_bad_clip_bound(self):
        with pytest.raises(ConfigError):
            privatize_identifier(one_hot(0, 2), 0.0, 1.0, stream())


class TestDecodeIdentifiers:
    def test_noiseless_decode(self):
        vecs = [one_hot(2, 3), one_hot(0, 3), one_hot(2, 3)]
        a = decode_identifiers(vecs, client_ids=[10, 11, 12])
        assert a.groups == ((11,), (), (10, 12))

    def test_all_equal_goes_to_zero(self):
        vecs = [np.ones(3), np.ones(3)]
        a = decode_identifiers(vecs)
        assert a.groups == ((0, 1), (), ())

    def test_empty_round(self):
        a = decode_identifiers([], k=4)
        assert a.groups == ((), (), (), ())
        assert a.selected == ()


def assignment(sizes, start=0):
    groups, next_id = [], start
    for s in sizes:
        groups.append(tuple(range(next_id, next_id + s)))
        next_id += s
    return RoundAssignment(tuple(groups))


class TestRebalance:
    def test_single_donor_pool(self):
        a = assignment([5, 1, 0])
        out = rebalance(a, 2, stream())
        assert out.sizes == (2, 2, 2)
        assert len(out.donors) == 3
        assert all(move.from_cluster == 0 for move in out.donors)

    def test_no_small_groups_is_identity(self):
        a = assignment([3, 3])
        out = rebalance(a, 2, stream())
        assert out.groups == a.groups
        assert out.donors == ()

    def test_two_group_split(self):
        a = assignment([4, 0])
        out = rebalance(a, 2, stream())
        assert out.sizes == (2, 2)

    def test_b_zero_disables(self):
        a = assignment([4, 0])
        out = rebalance(a, 0, stream())
        assert out.groups == a.groups

    def test_infeasible_rejected_before_mutation(self):
        a = assignment([3, 1, 0])
        with pytest.raises(ConfigError):
            rebalance(a, 2, stream())  # 4 clients, 3 groups, B=2 > floor(4/3)

    def test_randomized_battery(self):
        # partition preserved, min size >= B, each client moves at most once,
        # no donor group ends below B
        gen = np.random.default_rng(0)
        for trial in range(2000):
            k = int(gen.integers(2, 6))
            n = int(gen.integers(k, 40))
            sizes = np.bincount(gen.integers(0, k, size=n), minlength=k)
            a = assignment(sizes.tolist())
            b = int(gen.integers(0, n // k + 1))
            out = rebalance(a, b, stream(trial, "battery", trial))
            assert sorted(c for g in out.groups for c in g) == list(range(n))
            if b >= 1:
                assert min(out.sizes) >= b
            moved = [m.client_id for m in out.donors]
            assert len(moved) == len(set(moved))
            for m in out.donors:
                assert len(out.groups[m.from_cluster]) >= b

    @given(
        sizes=st.lists(st.integers(0, 12), min_size=2, max_size=5),
        b=st.integers(0, 6),
        seed=st.integers(0, 2**32),
    )
    @settings(max_examples=300, deadline=None)
    def test_partition_invariant_property(self, sizes, b, seed):
        n, k = sum(sizes), len(sizes)
        a = assignment(sizes)
        if n == 0 or b > n // k:
            if b >= 1:
                with pytest.raises(ConfigError):
                    rebalance(a, b, stream(seed, "hyp"))
            return
        out = rebalance(a, b, stream(seed, "hyp"))
        # disjoint cover of exactly the selected set, sizes floored at b
        assert sorted(c for g in out.groups for c in g) == list(range(n))
        if b >= 1:
            assert min(out.sizes) >= b

    def test_uniformity_of_single_draw(self):
        # one deficit slot, donors drawn uniformly from the only large group
        counts = np.zeros(4)
        for i in range(4000):
            a = assignment([4, 1])
            out = rebalance(a, 2, stream(1, "uni", i))
            counts[out.donors[0].client_id] += 1
        expected = 1000
        assert all(abs(c - expected) < 150 for c in counts)


class TestAggregate:
    def test_plain_mean_when_noiseless(self):
        out = aggregate_cluster(
            [np.array([1.0, 1.0]), np.array([3.0, 3.0])], 1.0, 0.0, stream()
        )
        np.testing.assert_allclose(out, [2.0, 2.0])

    def test_single_update(self):
        u = np.array([0.5, -0.5])
        np.testing.assert_allclose(aggregate_cluster([u], 1.0, 0.0, stream()), u)

    def test_empty_group_is_hard_failure(self):
        with pytest.raises(ValueError):
            aggregate_cluster([], 1.0, 1.0, stream())

    def test_effective_noise_std(self):
        # noise std on the mean of |S|=5 updates with C=1, sigma=2: 2*1*2/5 = 0.8
        zeros = [np.zeros(1) for _ in range(5)]
        draws = np.array(
            [aggregate_cluster(zeros, 1.0, 2.0, stream(5, "agg", i))[0] for i in range(10_000)]
        )
        assert abs(draws.std() - 0.8) < 0.04

    def test_fedavg_sensitivity_factor(self):
        zeros = [np.zeros(1) for _ in range(5)]
        draws = np.array(
            [
                aggregate_cluster(zeros, 1.0, 2.0, stream(6, "agg", i), sensitivity_factor=1.0)[0]
                for i in range(10_000)
            ]
        )
        assert abs(draws.std() - 0.4) < 0.02


class TestServerUpdate:
    def test_full_step(self):
        np.testing.assert_allclose(
            server_update(np.zeros(2), np.array([1.0, 2.0]), 1.0), [1.0, 2.0]
        )

    def test_zero_rate_freezes(self):
        theta = np.array([3.0, -1.0])
        np.testing.assert_array_equal(server_update(theta, np.ones(2), 0.0), theta)

    def test_half_step(self):
        np.testing.assert_allclose(
            server_update(np.array([2.0, 2.0]), np.array([2.0, -2.0]), 0.5), [3.0, 1.0]
        )


class TestSensitivityCoupling:
    """Adjacent selected-client sets, coupled randomness: per-cluster change of
    the pre-noise sum of clipped updates stays within 2*C_theta."""

    def run_pipeline(self, ids, updates, c_theta, sigma_s, b, seed, k):
        priv = [
            privatize_identifier(
                updates[i]["identifier"], 0.1, sigma_s,
                derive_stream(seed, [("client", i), ("idnoise", 0)]),
            )
            for i in ids
        ]
        pre = decode_identifiers(priv, ids, k=k)
        post = rebalance(pre, b, derive_stream(seed, [("rebalance", 0)]))
        sums = []
        for group in post.groups:
            total = np.zeros(3)
            for cid in group:
                total += updates[cid]["clipped"]
            sums.append(total)
        return sums

    def test_adjacent_sum_change_bounded(self):
        from fedclust.vectors import clip

        m, k, b, c_theta = 12, 3, 2, 0.7
        gen = np.random.default_rng(42)
        max_change = 0.0
        for trial in range(1000):
            seed = 10_000 + trial
            updates = {}
            for i in range(m):
                raw = gen.normal(scale=1.5, size=3)
                updates[i] = {
                    "identifier": one_hot(int(gen.integers(0, k)), k),
                    "clipped": clip(raw, c_theta),
                }
            removed = int(gen.integers(0, m))
            full = list(range(m))
            reduced = [i for i in full if i != removed]
            sums_full = self.run_pipeline(full, updates, c_theta, 0.4, b, seed, k)
            sums_red = self.run_pipeline(reduced, updates, c_theta, 0.4, b, seed, k)
            for sf, sr in zip(sums_full, sums_red):
                max_change = max(max_change, float(np.linalg.norm(sf - sr)))
        assert max_change <= 2 * c_theta + 1e-9
