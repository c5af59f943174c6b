"""Scikit-learn style facade over the federated clustering simulation.

``FederatedClustering`` behaves like an unsupervised estimator whose samples
are whole clients: ``fit`` takes a sequence of per-client datasets (or
(features, targets) pairs), trains the k cluster models, and exposes
``labels_``, ``cluster_models_`` and ``history_``. ``predict`` assigns new
clients to the trained clusters by minimum local loss. ``get_params`` /
``set_params`` / ``clone`` work as usual, so the estimator composes with the
wider ecosystem.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ConfigError
from .models import design_matrix, get_family
from .privacy import PrivacyConfig
from .simulation import Method, TrainConfig, run_experiment
from .validation import check_clients, check_fraction, check_int, check_positive


class FederatedClustering(BaseEstimator):
    """Cluster clients and learn one model per cluster, optionally under DP.

    Parameters mirror the simulation configuration; ``sigma_theta`` and
    ``sigma_s`` of 0 give the non-private variant, and ``b_min = 0`` disables
    rebalancing (recovering the plain base algorithm).
    """

    def __init__(
        self,
        n_clusters: int = 2,
        method: str = "rr_ifca",
        b_min: int = 0,
        sample_fraction: float = 1.0,
        n_rounds: int = 20,
        gamma: float = 1.0,
        local_lr: float = 0.1,
        local_epochs: int = 1,
        batch_size: int = 32,
        model_family: str = "linear_regression_mse",
        c_theta: float = math.inf,
        c_s: float = 0.1,
        sigma_theta: float = 0.0,
        sigma_s: float = 0.0,
        val_fraction: float = 0.2,
        init_std: float = 0.1,
        random_state: int = 0,
    ):
        self.n_clusters = n_clusters
        self.method = method
        self.b_min = b_min
        self.sample_fraction = sample_fraction
        self.n_rounds = n_rounds
        self.gamma = gamma
        self.local_lr = local_lr
        self.local_epochs = local_epochs
        self.batch_size = batch_size
        self.model_family = model_family
        self.c_theta = c_theta
        self.c_s = c_s
        self.sigma_theta = sigma_theta
        self.sigma_s = sigma_s
        self.val_fraction = val_fraction
        self.init_std = init_std
        self.random_state = random_state

    def _configs(self):
        check_int("n_clusters", self.n_clusters, minimum=1)
        check_int("b_min", self.b_min, minimum=0)
        check_int("n_rounds", self.n_rounds, minimum=0)
        check_fraction("sample_fraction", self.sample_fraction)
        check_fraction("val_fraction", self.val_fraction, closed_right=False)
        check_positive("c_theta", self.c_theta)
        train_cfg = TrainConfig(
            gamma=self.gamma,
            local_lr=self.local_lr,
            local_epochs=self.local_epochs,
            batch_size=self.batch_size,
            model_family=self.model_family,
        )
        priv_cfg = PrivacyConfig(
            c_theta=self.c_theta,
            c_s=self.c_s,
            sigma_theta=self.sigma_theta,
            sigma_s=self.sigma_s,
            q=self.sample_fraction,
            rounds=max(self.n_rounds, 1),
        )
        return Method(self.method), train_cfg, priv_cfg

    def fit(self, X, y=None):
        """Run the federated simulation on a sequence of client datasets."""
        clients = check_clients(X)
        method, train_cfg, priv_cfg = self._configs()
        if method is Method.DP_FEDAVG and self.n_clusters != 1:
            raise ConfigError("the single-model method requires n_clusters = 1")
        history = run_experiment(
            clients,
            method,
            self.n_clusters,
            train_cfg,
            priv_cfg,
            b_min=self.b_min,
            rounds=self.n_rounds,
            seed=self.random_state,
            eval_every=max(self.n_rounds, 1),
            val_fraction=self.val_fraction,
            init_std=self.init_std,
        )
        self.cluster_models_ = history.final_models
        self.history_ = history
        self.n_features_in_ = clients[0].n_features
        self.labels_ = self.predict(clients)
        return self

    def predict(self, X):
        """Minimum-local-loss cluster index for each client dataset."""
        self._check_fitted()
        clients = check_clients(X)
        family = get_family(self.model_family)
        labels = []
        for ds in clients:
            X1 = design_matrix(ds.features)
            losses = [family.loss(m, X1, ds.targets) for m in self.cluster_models_]
            labels.append(int(np.argmin(losses)))
        return np.asarray(labels)

    def score(self, X, y=None) -> float:
        """Negative mean per-client loss under each client's best cluster model."""
        self._check_fitted()
        clients = check_clients(X)
        family = get_family(self.model_family)
        total = 0.0
        for ds in clients:
            X1 = design_matrix(ds.features)
            total += min(family.loss(m, X1, ds.targets) for m in self.cluster_models_)
        return -total / len(clients)

    def _check_fitted(self):
        if not hasattr(self, "cluster_models_"):
            raise RuntimeError("estimator is not fitted; call fit first")
