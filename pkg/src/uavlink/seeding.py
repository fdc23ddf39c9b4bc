"""Deterministic RNG stream splitting.

Every stochastic stage derives its generator from a master seed plus a
tuple of integer keys, so paired runs (common random numbers across
schemes) and re-runs are bit-identical while independent stages stay
statistically independent.
"""

import numpy as np


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Child generator for (master_seed, key...); same inputs, same stream."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)
