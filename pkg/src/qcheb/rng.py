"""Seeded random streams.

Every random draw in the package comes from a ``numpy.random.Generator`` backed
by the Philox counter-based bit generator. Parallel trials derive independent
streams from ``(seed, trial_index)`` with :func:`split`.
"""

from __future__ import annotations

import numpy as np

SEED_MASK = (1 << 64) - 1


def make_rng(seed: int | np.random.Generator | None = 0) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        seed = 0
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed) & SEED_MASK)))


def split(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trial ``index`` of a run seeded with ``seed``."""
    ss = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))
