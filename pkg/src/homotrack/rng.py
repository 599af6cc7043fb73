"""Seedable random streams.

Every random draw in a run comes from a generator keyed by
``(seed, *keys)`` so that a single seed fixes the whole experiment and
each stage (scenario, prediction, resampling, ...) owns an independent
substream. ``seed`` may itself be a tuple of integers.
"""

import numpy as np

# stage keys
SCENARIO = 0
ASSOCIATE = 1
PREDICT = 2
BIRTH = 3
RESAMPLE = 4
FALLBACK = 5
MCMC = 6

GENERIC_FILTER = 10
MCMC_FILTER = 11


def stream(seed, *keys: int) -> np.random.Generator:
    """Return an independent generator for ``seed`` and a key path."""
    entropy = [int(s) for s in np.atleast_1d(seed)] + [int(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
