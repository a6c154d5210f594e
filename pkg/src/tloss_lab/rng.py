"""Deterministic PRNG: xoshiro256** seeded via splitmix64.

Fixed algorithms so identical seeds reproduce identical streams on every
platform; nothing here depends on Python's hash seed or numpy's generator
internals.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_INV_2_53 = 2.0 ** -53


def _splitmix64_next(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def sub_seed(seed: int, index: int) -> int:
    """index-th output (0-based) of the splitmix64 stream seeded with seed."""
    if index < 0:
        raise ValueError("index must be >= 0")
    s = seed & _MASK64
    out = 0
    for _ in range(index + 1):
        s, out = _splitmix64_next(s)
    return out


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Rng:
    """xoshiro256** generator with Box-Muller normals and Fisher-Yates shuffle."""

    def __init__(self, seed: int):
        s = seed & _MASK64
        state = []
        for _ in range(4):
            s, out = _splitmix64_next(s)
            state.append(out)
        if not any(state):
            state[3] = 1  # all-zero state would be a fixed point
        self._s = state
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * _INV_2_53

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n); exact integer arithmetic."""
        if n <= 0:
            raise ValueError("randint requires n >= 1")
        return ((self.next_u64() >> 11) * n) >> 53

    def normal(self) -> float:
        """Standard normal via Box-Muller; draws two uniforms per pair."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        u1 = ((self.next_u64() >> 11) + 1) * _INV_2_53  # (0, 1], keeps log finite
        u2 = (self.next_u64() >> 11) * _INV_2_53
        radius = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare_normal = radius * math.sin(theta)
        return radius * math.cos(theta)

    def normals(self, n: int) -> list[float]:
        return [self.normal() for _ in range(n)]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates, descending."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]
