"""Portable seeded permutations.

Batch orders come from SplitMix64 (Steele, Lea & Flood 2014) driving a
Fisher-Yates shuffle, so a given ``(seed, epoch)`` yields the same order on
every platform and numpy version. Bounded draws use the multiply-high map
``(r * n) >> 64``.
"""
from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def below(self, n: int) -> int:
        """Integer in ``[0, n)``."""
        return (self.next_u64() * n) >> 64


def derive_seed(*parts: int) -> int:
    """Fold integers into one 64-bit stream seed."""
    h = 0
    for p in parts:
        h = mix64((h ^ (p & MASK64)) + GOLDEN & MASK64)
    return h


def permutation(n: int, seed: int) -> list[int]:
    rng = SplitMix64(seed)
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        order[i], order[j] = order[j], order[i]
    return order
