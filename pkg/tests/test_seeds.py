"""Tests for seed splitting and candidate sets."""
import pytest

from models.entities import SeedPairs
from services.seeds import default_candidates, split_seeds


def _seeds(n: int) -> SeedPairs:
    return SeedPairs(tuple((i, n - 1 - i) for i in range(n)))


class TestSplitSeeds:
    def test_dbp15k_sized_split(self):
        train, test = split_seeds(_seeds(15000), 0.3, rng_seed=0)
        assert len(train) == 4500
        assert len(test) == 10500

    def test_parts_partition_the_seeds(self):
        seeds = _seeds(100)
        train, test = split_seeds(seeds, 0.3, rng_seed=5)
        assert train.as_set() | test.as_set() == seeds.as_set()
        assert not train.as_set() & test.as_set()

    def test_same_seed_same_split(self):
        seeds = _seeds(50)
        assert split_seeds(seeds, 0.3, 11) == split_seeds(seeds, 0.3, 11)

    def test_different_seed_different_split(self):
        seeds = _seeds(50)
        assert split_seeds(seeds, 0.3, 11)[0] != split_seeds(seeds, 0.3, 12)[0]

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1, 1.5])
    def test_fraction_out_of_range(self, fraction):
        with pytest.raises(ValueError):
            split_seeds(_seeds(10), fraction, 0)

    def test_empty_seeds(self):
        with pytest.raises(ValueError):
            split_seeds(SeedPairs(()), 0.3, 0)


class TestDefaultCandidates:
    def test_held_out_entities_sorted(self):
        candidates = default_candidates(SeedPairs(((4, 1), (2, 7))))
        assert candidates.left == (2, 4)
        assert candidates.right == (1, 7)
        assert not candidates.is_empty()
