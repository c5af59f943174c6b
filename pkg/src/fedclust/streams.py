"""Deterministic hierarchical random streams.

Every source of randomness in a run is addressed by a (root_seed, path)
descriptor, where the path is a sequence of (label, index) hops such as
("round", 3) -> ("client", 17) -> ("noise", 0). Equal descriptors yield
identical sequences; distinct descriptors yield statistically independent
ones. Because each consumer derives its own stream from stable labels, a
full run is a pure function of (config, root_seed) no matter in which order
clients are processed or how work is scheduled across workers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np

PathEntry = Tuple[str, int]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Immutable descriptor of one random stream.

    Sampling never mutates the descriptor: ``generator()`` materializes a
    fresh ``numpy.random.Generator`` at the call site, so descriptors can be
    shared freely between workers.
    """

    root_seed: int
    path: Tuple[PathEntry, ...]

    def child(self, label: str, index: int = 0) -> "RngStream":
        return RngStream(self.root_seed, self.path + ((str(label), int(index)),))

    def generator(self) -> np.random.Generator:
        """PCG64 generator keyed by (root_seed, path).

        Gaussian draws therefore go through numpy's ziggurat sampler, which
        is deterministic per platform/numpy version; bit-exactness across
        platforms is not promised, only distributional equivalence.
        """
        return np.random.Generator(np.random.PCG64(self._entropy()))

    def _entropy(self) -> int:
        h = hashlib.sha256()
        h.update((int(self.root_seed) & _MASK64).to_bytes(8, "little"))
        for label, index in self.path:
            h.update(label.encode("utf-8"))
            h.update(b"\x1f")
            h.update((int(index) & _MASK64).to_bytes(8, "little"))
            h.update(b"\x1e")
        return int.from_bytes(h.digest()[:16], "little")


def derive_stream(root_seed: int, labels: Iterable[PathEntry]) -> RngStream:
    """Build the stream for ``labels`` under ``root_seed``.

    Pure function of its inputs; ``labels`` must be nonempty.
    """
    path = tuple((str(label), int(index)) for label, index in labels)
    if not path:
        raise ValueError("stream path must be nonempty")
    return RngStream(int(root_seed), path)
