from __future__ import annotations

import numpy as np


class Rng:
    """Seeded scalar stream backed by the counter-based Philox generator.

    Philox output is specified bit-for-bit, so a seed reproduces the same
    stream on every platform. ``spawn`` derives independent child streams
    keyed by integers, which keeps per-task / per-cell draws decoupled from
    the order in which they are requested.
    """

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def spawn(self, *key: int) -> "Rng":
        return Rng(self.seed, self.key + tuple(key))

    def normal(self, size=None, mean: float = 0.0, std: float = 1.0):
        return mean + std * self._gen.standard_normal(size)

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        return self._gen.uniform(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size)


def gaussian_matrix(rows: int, cols: int, mean: float, std: float, rng: Rng) -> np.ndarray:
    if std < 0:
        raise ValueError("std must be nonnegative")
    if std == 0:
        return np.full((rows, cols), float(mean))
    return rng.normal((rows, cols), mean, std)
