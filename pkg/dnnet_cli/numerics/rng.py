"""
Deterministic random streams

All randomness goes through numpy's PCG64 bit generator seeded from a
SeedSequence, so the same seed yields the same draws on every platform.
Named child streams are derived from (seed, crc of name) and are independent
of the order in which they are requested.
"""

import zlib
from typing import Optional, Sequence, Tuple

import numpy as np


class Rng:
    """Seeded PCG64 stream"""

    def __init__(self, seed: int, key: Tuple[int, ...] = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.key = tuple(key)
        self._generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, *self.key])))

    def child(self, name: str) -> "Rng":
        """Independent stream for a named consumer"""
        return Rng(self.seed, self.key + (zlib.crc32(name.encode("utf-8")),))

    def normal(self, shape: Sequence[int], std: float = 1.0, dtype: np.dtype = np.float64) -> np.ndarray:
        return (self._generator.standard_normal(tuple(shape)) * std).astype(dtype)

    def uniform(self, shape: Sequence[int], low: float = 0.0, high: float = 1.0,
                dtype: np.dtype = np.float64) -> np.ndarray:
        return self._generator.uniform(low, high, size=tuple(shape)).astype(dtype)

    def integers(self, low: int, high: int, size: Optional[Sequence[int]] = None) -> np.ndarray:
        return self._generator.integers(low, high, size=None if size is None else tuple(size))

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._generator.choice(n, size=size, replace=replace)

    @property
    def generator(self) -> np.random.Generator:
        return self._generator
