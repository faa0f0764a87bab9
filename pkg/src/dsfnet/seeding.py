"""Deterministic seed derivation for parallel-safe experiments.

Every unit of work (window, sweep cell, model replicate) gets its own RNG
seeded by mixing a master seed with the unit's index. Serial and parallel
schedules therefore draw identical random streams.
"""

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def splitmix64(x: int) -> int:
    """One step of the splitmix64 mixing function."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(master_seed: int, *indices: int) -> int:
    """Mix a master seed with one or more stream indices into a new seed."""
    x = master_seed & _MASK64
    for idx in indices:
        x = splitmix64(x ^ (idx & _MASK64))
    return x


def rng_for(master_seed: int, *indices: int) -> np.random.Generator:
    """Generator seeded from (master_seed, indices); scheduling-independent."""
    return np.random.default_rng(derive_seed(master_seed, *indices))
