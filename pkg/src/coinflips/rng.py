"""Seeded random sources.

Every random draw in the package comes from a ``numpy.random.Generator``
backed by PCG64 (a 128-bit-state permuted congruential generator with
64-bit output).  Substreams are derived hierarchically through
``numpy.random.SeedSequence`` spawn keys, collapsed to a single 64-bit
integer so that any cell of an experiment can be replayed from the seed
recorded next to its results.
"""

from __future__ import annotations

import numpy as np

# Experiment identifiers used as the first level of substream derivation.
EXP_SAMPLE = 1
EXP_SAMPLE_SWEEP = 2
EXP_WEIGHT_SWEEP = 3
EXP_REPEATED_RUNS = 4

_MASK64 = (1 << 64) - 1


def derive_seed(master_seed: int, *path: int) -> int:
    """Return a 64-bit seed for the substream at ``path`` under ``master_seed``.

    Derivation is hierarchical (master -> experiment -> cell -> trial), so
    adding cells or trials never perturbs seeds of existing ones.
    """
    if master_seed < 0 or any(p < 0 for p in path):
        raise ValueError("seeds and substream indices must be non-negative")
    ss = np.random.SeedSequence(entropy=master_seed & _MASK64, spawn_key=tuple(path))
    lo, hi = (int(x) for x in ss.generate_state(2, dtype=np.uint32))
    return (hi << 32) | lo


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator for a 64-bit integer seed."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.Generator(np.random.PCG64(seed))


def substream(master_seed: int, *path: int) -> np.random.Generator:
    return make_rng(derive_seed(master_seed, *path))
