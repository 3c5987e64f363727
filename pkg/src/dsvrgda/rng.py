"""Labelled random substreams.

Every random draw in a run comes from a generator keyed by
``(master_seed, purpose, *labels)``.  The generator is Philox (counter
based), so any single step can be replayed in isolation without running
the steps before it.
"""
import numpy as np

# purposes
INIT = 0
SELECT = 1
COIN = 2
BATCH = 3
PROBLEM = 4
SPLIT = 5
PARTITION = 6
TOPOLOGY = 7


def stream(seed, purpose, *labels):
    """Return a fresh generator for the substream ``(purpose, *labels)``."""
    key = (int(purpose),) + tuple(int(label) for label in labels)
    seq = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))


def sample_batch(rng, n, size):
    """Draw ``size`` distinct indices uniformly from ``range(n)``."""
    if size > n:
        raise ValueError(f"batch size {size} exceeds population {n}")
    if size == n:
        return np.arange(n)
    return rng.choice(n, size=size, replace=False)
