"""Counter-based pseudo-random streams (splitmix64 finalizer).

Every value is a pure function of (seed, stream index, draw counter), so
utterance generation and weight init are reproducible across runs,
platforms, and thread counts, with no shared mutable generator state.
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """splitmix64 output function: one 64-bit avalanche round."""
    x = (x + _GOLDEN) & _MASK
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK
    x ^= x >> 31
    return x


class Stream:
    """One independent draw sequence keyed by (seed, index)."""

    __slots__ = ("key", "counter")

    def __init__(self, seed: int, index: int = 0):
        self.key = mix64(mix64(seed & _MASK) + (index & _MASK))
        self.counter = 0

    def next_u64(self) -> int:
        self.counter += 1
        return mix64((self.key + self.counter * _GOLDEN) & _MASK)

    def uniform(self) -> float:
        """Float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform_array(self, shape) -> "np.ndarray":
        import numpy as np

        n = int(np.prod(shape))
        return np.array([self.uniform() for _ in range(n)]).reshape(shape)

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        return lo + int(self.uniform() * (hi - lo + 1))

    def gauss(self) -> float:
        """Standard normal via Box-Muller (cosine branch only)."""
        u1 = self.uniform()
        u2 = self.uniform()
        if u1 <= 0.0:
            u1 = 2.0**-53
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def glorot(stream: Stream, rows: int, cols: int):
    """Uniform matrix in +-sqrt(6 / (fan_in + fan_out))."""
    import numpy as np

    limit = np.sqrt(6.0 / (rows + cols))
    return stream.uniform_array((rows, cols)) * (2.0 * limit) - limit
