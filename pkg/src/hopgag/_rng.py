"""Platform-independent random streams.

Every stream is a Philox counter-based generator keyed by a tuple of
integers, so a (seed, grid index, trial) key always yields the same numbers
regardless of machine or of the order in which trials are executed.
"""
import numpy as np


def make_rng(seed, *keys):
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
