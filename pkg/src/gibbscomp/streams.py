"""Counter-based random streams keyed by integer tuples.

A stream is fully determined by ``(seed, key)``, so results do not depend on
how work is scheduled across threads.
"""

from __future__ import annotations

import numpy as np

# roles
HIDDEN, OBSERVE, RESAMPLE, PROPAGATE, INITIAL = 0, 1, 2, 3, 4


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def categorical(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draws: row ``i`` of ``probs`` sampled with uniform ``u[i]``."""
    cdf = np.cumsum(probs, axis=-1)
    cdf[..., -1] = 1.0
    return (u[..., None] >= cdf).sum(axis=-1)


def categorical_shared(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Same as ``categorical`` with every row equal to ``probs``."""
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, u, side="right")
