"""Portable pseudo-random streams.

xoshiro256** seeded through splitmix64. Every random decision in the toolkit
(split shuffles, bootstrap draws, per-node feature sampling, synthetic image
noise) comes from here, so results are reproducible bit-for-bit by any
implementation of the same two generators.
"""
from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def substream_seed(seed: int, index: int) -> int:
    """Seed for the ``index``-th independent substream of ``seed``."""
    _, a = splitmix64(seed & MASK64)
    _, b = splitmix64((index + 1) * GOLDEN_GAMMA & MASK64)
    return a ^ b


class Xoshiro256:
    """Scalar xoshiro256** generator."""

    __slots__ = ("s",)

    def __init__(self, seed: int):
        if seed < 0 or seed > MASK64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        state = seed
        s = []
        for _ in range(4):
            state, out = splitmix64(state)
            s.append(out)
        self.s = s

    @classmethod
    def substream(cls, seed: int, index: int) -> "Xoshiro256":
        return cls(substream_seed(seed, index))

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` by rejection (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def uniform(self) -> float:
        """Uniform double in ``[0, 1)`` from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates, walking from the last position down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_distinct(self, n: int, k: int) -> list[int]:
        """``k`` distinct values from ``range(n)`` via a partial forward Fisher-Yates."""
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]


class LaneXoshiro256:
    """Many independent xoshiro256** streams advanced in lockstep.

    Lane ``i`` produces exactly the sequence of ``Xoshiro256(seeds[i])``; the
    vectorised form exists because per-pixel noise for thousands of images is
    too slow to draw one scalar at a time.
    """

    def __init__(self, seeds):
        seeds = [int(x) for x in seeds]
        cols = [Xoshiro256(x).s for x in seeds]
        self.s = np.array(cols, dtype=np.uint64).T.copy()  # shape (4, lanes)

    @staticmethod
    def _rotl(x: np.ndarray, k: int) -> np.ndarray:
        return (x << np.uint64(k)) | (x >> np.uint64(64 - k))

    def next_u64(self) -> np.ndarray:
        s0, s1, s2, s3 = self.s
        result = self._rotl(s1 * np.uint64(5), 7) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        self.s[3] = self._rotl(s3, 45)
        return result

    def uniform(self) -> np.ndarray:
        return (self.next_u64() >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))

    def uniform_block(self, count: int) -> np.ndarray:
        """``count`` uniforms per lane; returns shape ``(lanes, count)``."""
        out = np.empty((self.s.shape[1], count), dtype=np.float64)
        for i in range(count):
            out[:, i] = self.uniform()
        return out

    def normal_block(self, count: int) -> np.ndarray:
        """Standard normals per lane by Box-Muller over consecutive uniform pairs."""
        pairs = (count + 1) // 2
        u = self.uniform_block(2 * pairs)
        u1, u2 = u[:, 0::2], u[:, 1::2]
        r = np.sqrt(-2.0 * np.log1p(-u1))
        theta = 2.0 * math.pi * u2
        z = np.empty((u.shape[0], 2 * pairs), dtype=np.float64)
        z[:, 0::2] = r * np.cos(theta)
        z[:, 1::2] = r * np.sin(theta)
        return z[:, :count]
