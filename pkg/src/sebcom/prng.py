"""Deterministic, cross-language-reproducible random number generation.

xoshiro256** seeded through splitmix64, with Box-Muller for Gaussian
draws.  All simulation randomness in this package flows through these
generators so that a (seed, position) pair pins down every draw exactly.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64_mix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


def splitmix64_stream(seed: int, n: int) -> list[int]:
    """First ``n`` outputs of splitmix64 started at ``seed``."""
    out = []
    s = seed & _MASK64
    for _ in range(n):
        s = (s + 0x9E3779B97F4A7C15) & _MASK64
        out.append(_splitmix64_mix(s))
    return out


def derive_seed(seed: int, index: int) -> int:
    """Per-trial seed: seed XOR trial index pushed through splitmix64."""
    return splitmix64_stream((seed ^ index) & _MASK64, 1)[0]


class Xoshiro256StarStar:
    """xoshiro256** with the 256-bit state filled from splitmix64(seed)."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        s = splitmix64_stream(self.seed, 4)
        self._s = list(s)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        x = (s1 * 5) & _MASK64
        result = (((x << 7) | (x >> 57)) & _MASK64) * 9 & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK64
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * 1.1102230246251565e-16  # 2**-53

    def uniforms(self, n: int) -> np.ndarray:
        nxt = self.next_u64
        return np.array([nxt() >> 11 for _ in range(n)], dtype=np.float64) * 1.1102230246251565e-16

    def gaussians(self, n: int) -> np.ndarray:
        """``n`` standard-normal draws via Box-Muller on uniform pairs.

        Pair 2i/2i+1 of the uniform stream yields outputs 2i and 2i+1,
        so the Gaussian stream position is tied to the uniform stream.
        """
        pairs = (n + 1) // 2
        u = self.uniforms(2 * pairs)
        u1 = u[0::2]
        u2 = u[1::2]
        u1 = np.maximum(u1, 1.1102230246251565e-16)  # avoid log(0)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(2.0 * math.pi * u2)
        z[1::2] = r * np.sin(2.0 * math.pi * u2)
        return z[:n]

    def randint_below(self, bound: int) -> int:
        """Uniform integer in [0, bound) by rejection on the top bits."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        # smallest power-of-two mask covering bound
        mask = (1 << (bound - 1).bit_length()) - 1 if bound > 1 else 0
        while True:
            v = self.next_u64() & mask
            if v < bound:
                return v

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint_below(i + 1)
            items[i], items[j] = items[j], items[i]
