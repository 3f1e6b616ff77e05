"""
Seeded random streams for reproducible sampling.

Every stream is a numpy ``Generator`` driven by the PCG64 bit generator and
seeded through ``SeedSequence``. Independent streams are split off a master
seed by the spawn key ``(purpose, index)``::

    SeedSequence(entropy=master_seed, spawn_key=(purpose, index))

so the k-th prior path, the i-th posterior rollout and the c-th MCMC chain of
a run each own a stream that does not depend on how work is scheduled.
"""
import numpy as np

# Stream purposes, part of the spawn key
INSTANCE = 0
PRIOR_PATH = 1
POSTERIOR_ROLLOUT = 2
MCMC_CHAIN = 3
REFERENCE_CHAIN = 4

SEED_MASK = (1 << 64) - 1


def _entropy(seed):
    return int(seed) & SEED_MASK


def instance_stream(seed):
    """Stream used to draw couplings and biases of a generated instance."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(_entropy(seed))))


def split_stream(master_seed, purpose, index):
    """Independent stream for work item ``index`` of the given purpose."""
    sequence = np.random.SeedSequence(
        entropy=_entropy(master_seed),
        spawn_key=(int(purpose), int(index)),
    )
    return np.random.Generator(np.random.PCG64(sequence))


def path_stream(master_seed, index):
    return split_stream(master_seed, PRIOR_PATH, index)


def rollout_stream(master_seed, index):
    return split_stream(master_seed, POSTERIOR_ROLLOUT, index)


def uniform_block(master_seed, purpose, start, stop, width):
    """
    Stack ``width`` uniforms from each stream ``start..stop-1`` into a
    ``(stop - start, width)`` array. Row ``i`` only depends on its own stream.
    """
    block = np.empty((stop - start, width), dtype=np.float64)
    for row, index in enumerate(range(start, stop)):
        block[row] = split_stream(master_seed, purpose, index).random(width)
    return block
