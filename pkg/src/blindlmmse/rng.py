"""Counter-based random streams.

Every random draw in the package comes from a generator keyed by
``(base_seed, purpose, *counters)``, so results do not depend on the order in
which instances or runs are produced.
"""

import numpy as np

DICTIONARY = 0
INSTANCE = 1
MAP_INIT = 2
TRAIN = 3
HELDOUT = 4


def stream(base_seed, purpose, *counters):
    seq = np.random.SeedSequence(int(base_seed), spawn_key=(int(purpose),) + tuple(int(c) for c in counters))
    return np.random.Generator(np.random.PCG64(seq))


def seed_sequence(base_seed, purpose, *counters):
    return np.random.SeedSequence(int(base_seed), spawn_key=(int(purpose),) + tuple(int(c) for c in counters))
