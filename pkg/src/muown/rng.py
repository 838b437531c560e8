"""SplitMix64-based deterministic random streams.

Every synthetic dataset, weight init, and seeded fixture in this package is
drawn from this generator rather than numpy's, so the exact byte streams are
reproducible from a named 64-bit seed by any implementation of the same
(widely published) SplitMix64 update:

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out = z ^ (z >> 31)

Doubles take the top 53 bits of ``out``; gaussians use Box-Muller on pairs
of uniforms.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1


class SplitMix64:
    """Deterministic 64-bit stream with uniform/gaussian helpers."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53-bit resolution."""
        return (self.next_u64() >> 11) * 2.0**-53

    def gaussian(self) -> float:
        """Standard normal via Box-Muller; rejects the u=0 corner."""
        u = self.uniform()
        while u == 0.0:
            u = self.uniform()
        v = self.uniform()
        return math.sqrt(-2.0 * math.log(u)) * math.cos(2.0 * math.pi * v)

    def gaussian_array(self, shape) -> np.ndarray:
        out = np.empty(int(np.prod(shape)), dtype=np.float64)
        for i in range(out.size):
            out[i] = self.gaussian()
        return out.reshape(shape)

    def uniform_array(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        out = np.empty(int(np.prod(shape)), dtype=np.float64)
        span = high - low
        for i in range(out.size):
            out[i] = low + span * self.uniform()
        return out.reshape(shape)

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates shuffle of range(n) driven by this stream."""
        idx = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.next_u64() % (i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx


def derive_seed(*parts: int) -> int:
    """Mix integer tags into one 64-bit seed (order-sensitive)."""
    rng = SplitMix64(0xA0F3_51DE_9C2B_7E41)
    acc = 0
    for p in parts:
        acc ^= SplitMix64((p & _MASK) ^ rng.next_u64()).next_u64()
    return acc & _MASK
