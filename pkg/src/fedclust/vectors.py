"""L2 geometry for model vectors: norms, clipping, Gaussian perturbation.

Clipping correctness is what anchors the privacy guarantee, so the norm is
accumulated in double precision with numpy's pairwise reduction and the clip
uses the literal ``v / max(1, ||v|| / C)`` form rather than a branch.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .streams import RngStream


def as_params(v) -> np.ndarray:
    """Coerce to a 1-D float64 vector, rejecting NaN/Inf entries."""
    arr = np.ascontiguousarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector contains non-finite entries")
    return arr


def l2_norm(v) -> float:
    arr = as_params(v)
    return float(np.sqrt(np.add.reduce(np.square(arr))))


def clip(v, c: float) -> np.ndarray:
    """Scale ``v`` onto the L2 ball of radius ``c``: v / max(1, ||v||/c).

    Identity on the ball (including the zero vector); otherwise rescales to
    norm exactly ``c`` while preserving direction. ``c`` may be ``inf`` to
    disable clipping.
    """
    if not c > 0:
        raise ConfigError(f"clip bound must be positive, got {c}")
    arr = as_params(v)
    return arr / max(1.0, l2_norm(arr) / c)


def add_gaussian(v, std: float, rng: RngStream) -> np.ndarray:
    """Add iid zero-mean Gaussian noise of standard deviation ``std``.

    ``std == 0`` returns the input unchanged (no generator draw), so noiseless
    runs consume no randomness from ``rng``.
    """
    if std < 0:
        raise ValueError(f"noise std must be nonnegative, got {std}")
    arr = as_params(v)
    if std == 0:
        return arr.copy()
    return arr + rng.generator().normal(0.0, std, size=arr.shape)
