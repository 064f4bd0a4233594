"""Deterministic seeding utilities.

All randomness in the toolkit passes through Philox (counter-based, 64-bit),
so any object built from a 64-bit seed is bit-reproducible across platforms.
Derived seeds (per-block, per-row noise) are produced with the splitmix64
finalizer so the derivation itself is a fixed, documented function rather
than an implementation detail of a generator's state layout.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

# splitmix64 increment and finalizer multipliers (Steele, Lea & Flood).
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64(x: int) -> int:
    """One splitmix64 finalization round of a 64-bit integer."""
    x = (x + _GOLDEN) & MASK64
    x = ((x ^ (x >> 30)) * _MIX1) & MASK64
    x = ((x ^ (x >> 27)) * _MIX2) & MASK64
    return x ^ (x >> 31)


def derive_seed(master_seed: int, *words: int) -> int:
    """Fold integer words into a master seed to get an independent substream seed.

    Used to give each pipeline block (and each noise row of a synthetic
    generator) its own seed from one user-facing master seed. The chain is
    splitmix64(... splitmix64(splitmix64(master) ^ w0) ^ w1 ...), which keeps
    nearby (master, word) pairs decorrelated.
    """
    state = splitmix64(int(master_seed) & MASK64)
    for w in words:
        state = splitmix64(state ^ (int(w) & MASK64))
    return state


def generator(seed: int) -> np.random.Generator:
    """Philox-backed Generator keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=int(seed) & MASK64))
