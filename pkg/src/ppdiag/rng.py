"""Seedable, splittable random streams.

Every stream is a PCG64 generator seeded from
``numpy.random.SeedSequence(seed, spawn_key=key)``. Children are addressed by
key rather than drawn from the parent, so a child stream such as ``(i, j)`` for
a node pair is the same no matter how many other children were used first.
"""

from __future__ import annotations

import numpy as np


class RandomSource:
    def __init__(self, seed: int = 0, key: tuple[int, ...] = ()):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.key = tuple(int(k) for k in key)
        self.generator = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(seed, spawn_key=self.key))
        )

    def child(self, *key: int) -> "RandomSource":
        return RandomSource(self.seed, self.key + tuple(key))

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, key={self.key})"

    # thin conveniences used by the samplers
    def exponential(self, rate: float) -> float:
        return self.generator.standard_exponential() / rate

    def uniform(self) -> float:
        return self.generator.random()
