import numpy as np

# Stream purposes, the first entry of every spawn key
CHAIN = 0
EXACT_FILTER = 1
SURROGATE_FILTER = 2
PILOT = 3
SIMULATE = 4
DATA = 5

# Roles inside one filter time step
ROLE_PROPAGATE = 0
ROLE_RESAMPLE = 1


class StreamFactory:
    """
    Derives reproducible random streams from one master seed.

    Every stream is keyed by a tuple of non-negative integers, so the draws a
    particle block sees depend only on (seed, key) and never on scheduling.
    """

    def __init__(self, seed):
        if seed is None:
            raise ValueError("A master seed is required")
        self.seed = int(seed)

    def generator(self, *key):
        sequence = np.random.SeedSequence(self.seed, spawn_key=tuple(int(k) for k in key))
        return np.random.Generator(np.random.PCG64(sequence))

    def block_generator(self, purpose, iteration, time_index, block):
        return self.generator(purpose, iteration, time_index, ROLE_PROPAGATE, block)

    def resample_generator(self, purpose, iteration, time_index):
        return self.generator(purpose, iteration, time_index, ROLE_RESAMPLE)
