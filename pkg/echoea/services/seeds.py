from typing import Tuple

import numpy as np

from models.entities import CandidateSets, SeedPairs


def split_seeds(seeds: SeedPairs, train_fraction: float, rng_seed: int) -> Tuple[SeedPairs, SeedPairs]:
    """Shuffle the seeds and cut them into (train, test).

    ``|train| = round(train_fraction * |seeds|)``; pair order inside each part
    follows the shuffled order.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if len(seeds) == 0:
        raise ValueError("Cannot split an empty seed set")
    rng = np.random.default_rng(rng_seed)
    order = rng.permutation(len(seeds))
    n_train = int(round(train_fraction * len(seeds)))
    pairs = seeds.pairs
    train = SeedPairs(tuple(pairs[i] for i in order[:n_train]))
    test = SeedPairs(tuple(pairs[i] for i in order[n_train:]))
    return train, test


def default_candidates(test: SeedPairs) -> CandidateSets:
    """Entities still to be aligned: both sides of the held-out pairs."""
    return CandidateSets(left=tuple(test.left()), right=tuple(test.right()))
