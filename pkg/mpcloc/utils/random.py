########################################################################################################################
# imports

from typing import Union

import numpy as np


########################################################################################################################

# purpose tags keep scenario draws independent of corruption draws
PURPOSES = {
    "scenario": 0,
    "aliens": 1,
    "directions": 2,
    "shuffle": 3,
}

SeedLike = Union[int, np.random.Generator, None]


def substream(seed: int, point: int, trial: int, purpose: str) -> np.random.Generator:
    """
    Derives an independent generator for one (point, trial, purpose) cell of an experiment.

    Args:
        seed (int): Experiment base seed.
        point (int): Grid point index.
        trial (int): Trial index within the grid point.
        purpose (str): One of the keys of PURPOSES.

    Returns:
        np.random.Generator: A generator that depends only on the four arguments.
    """
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(point), int(trial), PURPOSES[purpose]))
    return np.random.default_rng(sequence)


def as_generator(seed: SeedLike) -> np.random.Generator:
    """Accepts an integer seed or an existing generator."""

    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
