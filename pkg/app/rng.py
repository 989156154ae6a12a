"""Counter-based random streams.

Every stream is a Philox generator keyed by the master seed plus a spawn key
naming its purpose and position, so any block of work can be regenerated on
its own and results never depend on how work is split across workers.
"""
import numpy as np

SATURATED = 1
QZ = 2
MAR = 3
STRATUM = 4
PRIOR = 5
GIBBS = 6
DGP = 7
STUDY = 8


def stream(seed, purpose, *indices):
    """Independent generator for (seed, purpose, *indices)"""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(purpose, *map(int, indices)))
    return np.random.Generator(np.random.Philox(sequence))


def blocks(total, batch_size):
    """Yield (block, start, size) covering `total` items in fixed-size blocks"""
    for block, start in enumerate(range(0, total, batch_size)):
        yield block, start, min(batch_size, total - start)


def child_seed(seed, *indices):
    """Derived 64-bit seed for a sub-task"""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(map(int, indices)))
    return int(sequence.generate_state(1, np.uint64)[0])


def spawn_seeds(seed, count):
    """Seeds of `count` independent replicates"""
    return [int(child.generate_state(1, np.uint64)[0])
            for child in np.random.SeedSequence(int(seed)).spawn(count)]
