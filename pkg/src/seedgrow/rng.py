"""Deterministic random streams.

Every stochastic routine in the package draws from a Philox-keyed
generator (a counter-based, splittable 64-bit algorithm with a published
spec), never from the platform default. Fixtures generated from a seed
are therefore reproducible across runs and platforms.
"""

from __future__ import annotations

import numpy as np


def rng_from_seed(seed: int) -> np.random.Generator:
    """Generator keyed directly by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


_MASK64 = (1 << 64) - 1


def substream(seed: int, *path: int) -> np.random.Generator:
    """Independent child stream identified by (seed, path).

    Distinct paths give statistically independent streams, so parallel
    rollouts or per-purpose draws never share state. The key mixing is
    64-bit wrapping multiply-xor (splitmix-style constants).
    """
    bits = int(seed) & _MASK64
    for p in path:
        bits = ((bits ^ 0x9E3779B97F4A7C15) * 0xBF58476D1CE4E5B9) & _MASK64
        bits = (bits + (int(p) & _MASK64) * 0x94D049BB133111EB) & _MASK64
    return np.random.Generator(np.random.Philox(key=np.uint64(bits)))
