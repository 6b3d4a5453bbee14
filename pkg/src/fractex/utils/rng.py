"""Seeded random streams.

Every stream is numpy's PCG64 bit generator seeded through ``SeedSequence``,
which gives the same numbers on every platform for a given seed.
"""

import numpy as np


def make_rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    """Return ``seed`` unchanged when it already is a generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(0 if seed is None else int(seed))))


def derive_seeds(seed: int, count: int) -> list[int]:
    """Derive ``count`` independent unsigned 64-bit child seeds from ``seed``."""
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]
