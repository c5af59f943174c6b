"""Exact Renyi-DP accounting for the rebalanced-clustering release.

Each communication round, conditioned on the sampled client subset, releases
two Gaussian mechanisms over disjoint queries:

  * privatized cluster identifiers: noise std ``C_s * sigma_s`` against
    sensitivity ``C_s``,
  * per-cluster sums of clipped model updates: noise std
    ``2 * C_theta * sigma_theta`` against sensitivity ``2 * C_theta`` (a
    single client add/remove can move at most one extra update between
    clusters, doubling the plain clipping bound).

Both mechanisms therefore enter the accountant only through their noise
multipliers. The per-round RDP curve is the adaptive composition
``eps(alpha) = alpha/(2 sigma_s^2) + alpha/(2 sigma_theta^2)``, amplified by
client subsampling without replacement (exact binomial-sum bound, evaluated
in log space), composed over T rounds, and finally converted to (eps, delta)
via ``eps + log(1/delta)/(alpha - 1)`` minimized over an integer order grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Tuple

from .errors import CalibrationError, ConfigError, InsufficientNoiseError

#: Integer orders only: the subsampling bound is a binomial sum over j = 2..alpha.
DEFAULT_ALPHA_GRID: Tuple[int, ...] = tuple(range(2, 65)) + (96, 128, 192, 256)

#: Failure probability of the (eps, delta) guarantee; kept below 1/M in the
#: intended client-count regime.
DEFAULT_DELTA = 1e-3

_LOG2 = math.log(2.0)


@dataclass(frozen=True)
class PrivacyConfig:
    """Mechanism and accounting parameters for a full run.

    ``sigma_theta`` / ``sigma_s`` are noise multipliers (noise std divided by
    mechanism sensitivity). A multiplier of 0 means no noise (infinite
    epsilon); ``math.inf`` disables that mechanism entirely (zero epsilon),
    which is how the single-model no-identifier variant is accounted.
    """

    c_theta: float
    c_s: float
    sigma_theta: float
    sigma_s: float
    q: float
    rounds: int
    delta: float = DEFAULT_DELTA
    alpha_grid: Tuple[int, ...] = field(default=DEFAULT_ALPHA_GRID)

    def __post_init__(self) -> None:
        if not self.c_theta > 0:
            raise ConfigError(f"c_theta must be positive, got {self.c_theta}")
        if not self.c_s > 0:
            raise ConfigError(f"c_s must be positive, got {self.c_s}")
        if self.sigma_theta < 0 or self.sigma_s < 0:
            raise ConfigError("noise multipliers must be nonnegative")
        if not 0 <= self.q <= 1:
            raise ConfigError(f"sampling ratio q must be in [0, 1], got {self.q}")
        if not (isinstance(self.rounds, int) and self.rounds >= 1):
            raise ConfigError(f"rounds must be a positive integer, got {self.rounds}")
        if not 0 < self.delta < 1:
            raise ConfigError(f"delta must be in (0, 1), got {self.delta}")
        grid = tuple(int(a) for a in self.alpha_grid)
        if not grid or any(a < 2 for a in grid):
            raise ConfigError("alpha_grid entries must be integers >= 2")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("alpha_grid must be strictly increasing")
        object.__setattr__(self, "alpha_grid", grid)


class RdpCurve:
    """RDP budget as a function of the integer order alpha >= 2.

    ``eps_at_infinity`` is carried explicitly so the subsampling bound can
    take its ``min{2, .}`` branch structurally instead of pushing floating
    infinities through arithmetic; for any Gaussian mechanism it is +inf.
    """

    def __init__(self, eps_fn: Callable[[int], float], eps_at_infinity: float):
        self._eps_fn = eps_fn
        self.eps_at_infinity = float(eps_at_infinity)

    def eps_at(self, alpha: int) -> float:
        if not (isinstance(alpha, int) and alpha >= 2):
            raise ValueError(f"order alpha must be an integer >= 2, got {alpha}")
        eps = float(self._eps_fn(alpha))
        if eps < 0:
            raise ValueError(f"curve returned negative epsilon at alpha={alpha}")
        return eps


def rdp_gaussian(alpha: int, sigma: float) -> float:
    """RDP of a Gaussian mechanism with noise multiplier ``sigma``.

    Returns ``alpha / (2 sigma^2)``; ``sigma == 0`` yields +inf (no noise)
    and ``sigma == inf`` yields 0 (mechanism disabled).
    """
    if not (isinstance(alpha, int) and alpha >= 2):
        raise ValueError(f"order alpha must be an integer >= 2, got {alpha}")
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return math.inf
    if math.isinf(sigma):
        return 0.0
    return alpha / (2.0 * sigma * sigma)


def per_round_curve(cfg: PrivacyConfig) -> RdpCurve:
    """Conditional-on-sampled-clients budget of one round.

    Adaptive composition of the identifier and model mechanisms:
    ``eps(alpha) = rdp_gaussian(alpha, sigma_s) + rdp_gaussian(alpha,
    sigma_theta)``, with ``eps(inf) = +inf``.
    """
    sig_s, sig_t = cfg.sigma_s, cfg.sigma_theta
    return RdpCurve(
        lambda a: rdp_gaussian(a, sig_s) + rdp_gaussian(a, sig_t),
        math.inf,
    )


def _log_expm1(x: float) -> float:
    """log(e^x - 1), stable for both tiny and large x."""
    if x <= 0:
        raise ValueError("log(e^x - 1) needs x > 0")
    if x > 36:  # e^-36 below double rounding of x
        return x
    return math.log(math.expm1(x))


def _logsumexp(terms) -> float:
    m = max(terms)
    if math.isinf(m):
        return m
    return m + math.log(sum(math.exp(t - m) for t in terms))


def amplify_subsample(curve: RdpCurve, q: float, alpha: int) -> float:
    """Exact subsampling-without-replacement amplification at order alpha.

    eps_q(alpha) = (1/(alpha-1)) * log( 1
        + q^2 C(alpha,2) min{ 4(e^{eps(2)}-1), e^{eps(2)} min[2, (e^{eps(inf)}-1)^2] }
        + sum_{j=3}^{alpha} q^j C(alpha,j) e^{(j-1) eps(j)} min{2, (e^{eps(inf)}-1)^j} )

    The sum is evaluated in log space (log-binomials via lgamma), since the
    e^{(j-1) eps(j)} factors overflow doubles well before alpha reaches 60.
    """
    if not 0 <= q <= 1:
        raise ConfigError(f"sampling ratio q must be in [0, 1], got {q}")
    if not (isinstance(alpha, int) and alpha >= 2):
        raise ValueError(f"order alpha must be an integer >= 2, got {alpha}")
    if q == 0:
        return 0.0

    eps2 = curve.eps_at(2)
    if math.isinf(eps2):
        return math.inf
    log_q = math.log(q)
    eps_inf_finite = not math.isinf(curve.eps_at_infinity)

    def log_cap(j: int) -> float:
        # log min{2, (e^{eps(inf)} - 1)^j}; the Gaussian case is always log 2.
        if not eps_inf_finite:
            return _LOG2
        return min(_LOG2, j * _log_expm1(curve.eps_at_infinity))

    def log_binom(n: int, j: int) -> float:
        return math.lgamma(n + 1) - math.lgamma(j + 1) - math.lgamma(n - j + 1)

    # j = 2 term: min{4(e^{eps2} - 1), e^{eps2} * min[2, (e^{eps_inf}-1)^2]}
    option_a = math.log(4.0) + _log_expm1(eps2) if eps2 > 0 else -math.inf
    option_b = eps2 + log_cap(2)
    if eps2 == 0:
        log_j2 = -math.inf  # both options vanish: 4(e^0-1) = 0
    else:
        log_j2 = 2 * log_q + log_binom(alpha, 2) + min(option_a, option_b)

    terms = [0.0, log_j2]  # log 1 plus the pair term
    for j in range(3, alpha + 1):
        eps_j = curve.eps_at(j)
        if math.isinf(eps_j):
            return math.inf
        terms.append(j * log_q + log_binom(alpha, j) + (j - 1) * eps_j + log_cap(j))
    return _logsumexp(terms) / (alpha - 1)


def compose_rounds(eps_per_round_at_alpha: float, rounds: int) -> float:
    """Adaptive composition over ``rounds`` identical rounds at fixed alpha."""
    if not (isinstance(rounds, int) and rounds >= 1):
        raise ValueError(f"rounds must be a positive integer, got {rounds}")
    return rounds * eps_per_round_at_alpha


def rdp_to_dp(eps_alpha: float, alpha: int, delta: float) -> float:
    """Convert an (alpha, eps) RDP bound to (eps + log(1/delta)/(alpha-1), delta)-DP."""
    if not (isinstance(alpha, int) and alpha >= 2):
        raise ValueError(f"order alpha must be an integer >= 2, got {alpha}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    return eps_alpha + math.log(1.0 / delta) / (alpha - 1)


@dataclass(frozen=True)
class AccountResult:
    eps_dp: float
    best_alpha: int


def account(cfg: PrivacyConfig) -> AccountResult:
    """Total (eps, delta)-DP cost of the full T-round release.

    Evaluates the subsampled, composed, converted bound at every order of the
    grid and returns the minimum; ties break toward the smaller order.
    """
    curve = per_round_curve(cfg)
    best_eps = math.inf
    best_alpha = None
    for alpha in cfg.alpha_grid:
        per_round = amplify_subsample(curve, cfg.q, alpha)
        eps = rdp_to_dp(compose_rounds(per_round, cfg.rounds), alpha, cfg.delta)
        if eps < best_eps:
            best_eps = eps
            best_alpha = alpha
    if best_alpha is None:
        raise InsufficientNoiseError(
            "insufficient noise: every order in the grid yields infinite epsilon"
        )
    return AccountResult(eps_dp=best_eps, best_alpha=best_alpha)


def calibrate(
    target_eps: float,
    delta: float,
    q: float,
    rounds: int,
    ratio: float = 0.5,
    c_theta: float = 1.0,
    c_s: float = 0.1,
    alpha_grid: Tuple[int, ...] = DEFAULT_ALPHA_GRID,
    sigma_bounds: Tuple[float, float] = (1e-2, 1e4),
    rel_tol: float = 2e-4,
) -> Tuple[float, float]:
    """Invert ``account`` for a target epsilon, returning (sigma_theta, sigma_s).

    The two multipliers are coupled so the identifier mechanism consumes the
    fraction ``ratio`` of the per-round RDP at order 2, i.e. sigma_s =
    sigma_theta / sqrt(ratio / (1 - ratio)); ``ratio = 0.5`` gives an even
    split (equal multipliers). With the coupling fixed, ``account`` is
    monotone decreasing in sigma_theta, so a plain bisection converges to the
    requested relative tolerance.
    """
    if not target_eps > 0:
        raise ConfigError(f"target epsilon must be positive, got {target_eps}")
    if not 0 < ratio < 1:
        raise ConfigError(f"budget split ratio must be in (0, 1), got {ratio}")
    r = math.sqrt(ratio / (1.0 - ratio))

    def eps_of(sigma_theta: float) -> float:
        cfg = PrivacyConfig(
            c_theta=c_theta,
            c_s=c_s,
            sigma_theta=sigma_theta,
            sigma_s=sigma_theta / r,
            q=q,
            rounds=rounds,
            delta=delta,
            alpha_grid=alpha_grid,
        )
        return account(cfg).eps_dp

    lo, hi = sigma_bounds
    eps_lo, eps_hi = eps_of(lo), eps_of(hi)
    if not (eps_hi <= target_eps <= eps_lo):
        raise CalibrationError(
            f"target eps={target_eps} outside reachable range "
            f"[{eps_hi:.6g}, {eps_lo:.6g}] for sigma in {sigma_bounds}"
        )
    tol = rel_tol * target_eps
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        eps_mid = eps_of(mid)
        if abs(eps_mid - target_eps) <= tol:
            return mid, mid / r
        if eps_mid > target_eps:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(
        f"bisection did not reach tolerance {tol:.3g} for target eps={target_eps}"
    )
