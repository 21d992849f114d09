"""Deterministic sub-seed derivation.

All randomness in a run flows from a single 64-bit root seed. Sub-seeds for
independent streams (init, shuffling, sphere sampling, per-sample draws, ...)
are derived with a splitmix64 chain so that adding or reordering consumers of
one stream never perturbs another.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1

# fixed stream tags
INIT_ENCODER = 1
INIT_HEAD = 2
SHUFFLE = 3
SPHERE = 4
SPLIT = 5
SAMPLE = 6


def splitmix64(x: int) -> int:
    """One splitmix64 step: mixes a 64-bit state into a well-scrambled output."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def derive(root: int, *path: int) -> int:
    """Derive the sub-seed for stream ``path`` under ``root``.

    Each path element is folded into the chain with a splitmix64 step, so
    derive(s, a, b) != derive(s, b, a) and streams are pairwise independent
    for PRNG purposes.
    """
    s = splitmix64(root & _MASK)
    for p in path:
        s = splitmix64(s ^ splitmix64(p & _MASK))
    return s


def rng(root: int, *path: int) -> np.random.Generator:
    """PCG64 generator seeded from the derived sub-seed."""
    return np.random.default_rng(derive(root, *path))
