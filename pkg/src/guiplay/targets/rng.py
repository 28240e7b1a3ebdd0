"""xorshift64* generator, seeded through splitmix64.

State is a plain int so game states stay immutable values that can be
copied, hashed and replayed. Constants follow Vigna (2014):
shifts 12/25/27 and multiplier 0x2545F4914F6CDD1D.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
MULTIPLIER = 0x2545F4914F6CDD1D


def seed_state(seed: int) -> int:
    """splitmix64 of the seed; never returns the forbidden zero state."""
    z = (int(seed) + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    z ^= z >> 31
    return z or 0x9E3779B97F4A7C15


def next_u64(state: int) -> tuple[int, int]:
    """Advance once; returns ``(new_state, output)``."""
    x = state
    x ^= x >> 12
    x ^= (x << 25) & MASK64
    x ^= x >> 27
    return x, (x * MULTIPLIER) & MASK64


def next_below(state: int, bound: int) -> tuple[int, int]:
    """Uniform integer in ``[0, bound)`` by multiply-shift on the high 32 bits."""
    if bound <= 0:
        raise ValueError("bound must be positive")
    state, out = next_u64(state)
    return state, ((out >> 32) * bound) >> 32


def next_float(state: int) -> tuple[int, float]:
    """Uniform float in ``[0, 1)`` with 53 random bits."""
    state, out = next_u64(state)
    return state, (out >> 11) / float(1 << 53)
