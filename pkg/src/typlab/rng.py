"""Deterministic 64-bit PRNG: xoshiro256** seeded through splitmix64.

All arithmetic is exact unsigned 64-bit, so a given seed produces the same
stream on every platform and Python build. Constants are the published
xoshiro256** 1.0 / splitmix64 values.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1

# splitmix64
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

#: 2**-53, scaling the top 53 bits of a u64 into [0, 1).
_U53_SCALE = 1.1102230246251565e-16


def splitmix64(seed: int, count: int) -> list[int]:
    """First `count` splitmix64 outputs for the given 64-bit seed."""
    x = seed & MASK64
    out = []
    for _ in range(count):
        x = (x + _GAMMA) & MASK64
        z = x
        z = ((z ^ (z >> 30)) * _MIX1) & MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & MASK64
        out.append((z ^ (z >> 31)) & MASK64)
    return out


class Xoshiro256StarStar:
    """xoshiro256** stream; state expanded from the seed via splitmix64."""

    __slots__ = ("s0", "s1", "s2", "s3")

    def __init__(self, seed: int):
        s0, s1, s2, s3 = splitmix64(seed, 4)
        if s0 == s1 == s2 == s3 == 0:
            s0 = 1  # the all-zero state is the one fixed point; unreachable in practice
        self.s0, self.s1, self.s2, self.s3 = s0, s1, s2, s3

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s0, self.s1, self.s2, self.s3
        x = (s1 * 5) & MASK64
        result = ((((x << 7) | (x >> 57)) & MASK64) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & MASK64
        self.s0, self.s1, self.s2, self.s3 = s0, s1, s2, s3
        return result

    def random(self) -> float:
        """One double in [0, 1) built from the top 53 bits."""
        return (self.next_u64() >> 11) * _U53_SCALE

    def block(self, count: int) -> list[float]:
        """`count` doubles in [0, 1); identical to repeated random() calls.

        Unrolled into locals because sampling loops call this on the hot path.
        """
        s0, s1, s2, s3 = self.s0, self.s1, self.s2, self.s3
        out = []
        append = out.append
        for _ in range(count):
            x = (s1 * 5) & MASK64
            r = ((((x << 7) | (x >> 57)) & MASK64) * 9) & MASK64
            t = (s1 << 17) & MASK64
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & MASK64
            append((r >> 11) * _U53_SCALE)
        self.s0, self.s1, self.s2, self.s3 = s0, s1, s2, s3
        return out
