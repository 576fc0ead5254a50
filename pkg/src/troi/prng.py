"""splitmix64: a tiny, platform-stable PRNG for reproducible synthetic data."""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def prng_next(state: int) -> tuple[int, int]:
    """Advance ``state`` one step; return ``(new_state, output)``."""
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


class SplitMix64:
    """Stateful wrapper with a small numpy-flavoured sampling surface."""

    def __init__(self, seed: int):
        if not 0 <= seed <= MASK64:
            raise ValueError(f"seed must be a u64, got {seed}")
        self.state = seed

    def next_u64(self) -> int:
        self.state, out = prng_next(self.state)
        return out

    def random(self) -> float:
        """Uniform float in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low=0.0, high=1.0, size=None):
        if size is None:
            return low + (high - low) * self.random()
        n = int(np.prod(size))
        u = np.array([self.random() for _ in range(n)], dtype=np.float64)
        return (low + (high - low) * u).reshape(size)

    def integers(self, low: int, high: int) -> int:
        """Integer in [low, high). Modulo bias is irrelevant at these ranges."""
        if high <= low:
            raise ValueError("empty integer range")
        return low + self.next_u64() % (high - low)

    def features(self, shape, dtype=np.float64) -> np.ndarray:
        """Synthetic feature tensor, uniform in [-1, 1), row-major draw order."""
        return self.uniform(-1.0, 1.0, size=tuple(shape)).astype(dtype)
