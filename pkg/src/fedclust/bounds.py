"""Analytic calculators for the misclassification and contraction bounds.

These evaluate closed-form high-probability bounds for the rebalanced
clustering iteration under strongly convex local objectives; they are
reporting tools, not empirical predictors.

Misassignment probability (three error sources: min-loss selection noise,
identifier privatization flips, rebalancing moves):

    tau = 8 eta^2 k / (beta^2 lambda^2 Delta^4)
        + sigma_s k / sqrt(pi) * exp(-1 / (4 sigma_s^2))
        + k^2 mu^2 / (M/k - B)^2

Per-round contraction factor and error floor, with rho = M - (k-1) B:

    K = gamma L (B - 2 tau M / delta_c) / (2 rho)
    eps_floor = 4 v / sqrt(delta_c (B delta_c - 4 tau M))
              + 6 tau gamma L Delta M / (delta_c B)
              + 8 gamma v k sqrt(tau k M) / (B delta_c sqrt(delta_c))
              + (2 gamma sigma_theta C_theta / B)
                * sqrt(d + 2 sqrt(d ln(4/delta_c)) + 2 ln(4/delta_c))
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class AnalysisParams:
    """Problem constants entering the bounds.

    ``loss_variance``, ``grad_variance`` and ``size_variance`` are the
    variance bounds themselves (eta^2, v^2, mu^2), not standard deviations.
    """

    strong_convexity: float      # lambda
    smoothness: float            # L
    loss_variance: float         # eta^2
    grad_variance: float         # v^2
    size_variance: float         # mu^2
    grad_norm_bound: float       # G
    separation_slack: float      # beta in (0, 1/2)
    init_slack: float            # alpha_0 in (0, 1/2)
    separation: float            # Delta, minimum distance between optima
    n_clients: int               # M
    n_clusters: int              # k
    b_min: int                   # B
    gamma: float
    sigma_s: float
    sigma_theta: float
    c_theta: float
    fail_prob: float             # delta_c
    dim: int                     # d

    def __post_init__(self) -> None:
        if not 0 < self.separation_slack < 0.5:
            raise ConfigError("separation_slack must lie in (0, 1/2)")
        if not 0 < self.init_slack < 0.5:
            raise ConfigError("init_slack must lie in (0, 1/2)")
        if self.strong_convexity > self.smoothness:
            raise ConfigError("strong convexity cannot exceed smoothness")
        if not self.separation > 0:
            raise ConfigError("separation must be positive")
        if self.n_clients <= self.n_clusters * self.b_min:
            raise ConfigError("need M > k * B")
        if not 0 < self.fail_prob < 1:
            raise ConfigError("fail_prob must lie in (0, 1)")
        for name in ("loss_variance", "grad_variance", "size_variance"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")


def tau_bound(p: AnalysisParams) -> float:
    """Per-round probability bound on misassigning one client's update."""
    avg = p.n_clients / p.n_clusters
    if avg <= p.b_min:
        raise ConfigError("tau_bound requires M/k > B")
    selection = 8.0 * p.loss_variance * p.n_clusters / (
        p.separation_slack**2 * p.strong_convexity**2 * p.separation**4
    )
    if p.sigma_s == 0:
        privatization = 0.0
    else:
        privatization = (
            p.sigma_s * p.n_clusters / math.sqrt(math.pi)
            * math.exp(-1.0 / (4.0 * p.sigma_s**2))
        )
    rebalancing = p.n_clusters**2 * p.size_variance / (avg - p.b_min) ** 2
    return selection + privatization + rebalancing


@dataclass(frozen=True)
class ContractionBound:
    contraction: float
    eps_floor: float
    tau: float
    vacuous: bool


def contraction_params(p: AnalysisParams) -> ContractionBound:
    """Contraction factor K and error floor of the per-round recursion.

    When B delta_c <= 4 tau M the floor's leading term is undefined and the
    bound is reported as vacuous (eps_floor = inf) rather than raising.
    """
    if p.b_min < 1:
        raise ConfigError("contraction bound requires B >= 1")
    tau = tau_bound(p)
    rho = p.n_clients - (p.n_clusters - 1) * p.b_min
    K = (
        p.gamma * p.smoothness
        * (p.b_min - 2.0 * tau * p.n_clients / p.fail_prob)
        / (2.0 * rho)
    )
    if p.b_min * p.fail_prob <= 4.0 * tau * p.n_clients:
        return ContractionBound(contraction=K, eps_floor=math.inf, tau=tau, vacuous=True)

    v = math.sqrt(p.grad_variance)
    dc = p.fail_prob
    log_term = math.log(4.0 / dc)
    floor = (
        4.0 * v / math.sqrt(dc * (p.b_min * dc - 4.0 * tau * p.n_clients))
        + 6.0 * tau * p.gamma * p.smoothness * p.separation * p.n_clients / (dc * p.b_min)
        + 8.0 * p.gamma * v * p.n_clusters * math.sqrt(tau * p.n_clusters * p.n_clients)
        / (p.b_min * dc * math.sqrt(dc))
        + (2.0 * p.gamma * p.sigma_theta * p.c_theta / p.b_min)
        * math.sqrt(p.dim + 2.0 * math.sqrt(p.dim * log_term) + 2.0 * log_term)
    )
    return ContractionBound(contraction=K, eps_floor=floor, tau=tau, vacuous=False)


def rounds_to_accuracy(p: AnalysisParams, eps_target: float) -> float:
    """Round count after which distance to the optima drops to ``eps_target``:

    T = (1/K) ln(Delta sqrt(lambda) / (2 eps_target sqrt(L)))
      + ln(Delta sqrt(lambda) / (8 (1/2 - alpha_0) sqrt(L))) / ln(1 - K)
    """
    if not eps_target > 0:
        raise ConfigError("eps_target must be positive")
    bound = contraction_params(p)
    K = bound.contraction
    if not 0 < K < 1:
        raise ConfigError(f"contraction factor K={K:.6g} outside (0, 1); bound vacuous")
    ratio = p.separation * math.sqrt(p.strong_convexity) / math.sqrt(p.smoothness)
    first = math.log(ratio / (2.0 * eps_target)) / K
    second = math.log(ratio / (8.0 * (0.5 - p.init_slack))) / math.log(1.0 - K)
    return first + second
