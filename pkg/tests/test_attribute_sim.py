"""Tests for attribute matching and the attribute similarity matrices."""
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from models.entities import CandidateSets, KnowledgeGraph, SimilarityMatrix, SimilarityWeights
from services.attribute_sim import (
    align_attributes,
    attr_similarity,
    attr_value_similarity,
    combine_similarity,
    dice,
    jaccard,
    load_normalizer,
    match_attributes,
    normalize_name,
    write_alignment_report,
)
from services.kg_loader import DatasetFileMissingError, DatasetParseError


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _kg(prefix: str, attribute_names, entity_attrs) -> KnowledgeGraph:
    """entity_attrs: one {attribute name: [values]} dict per entity."""
    values = []
    triples = []
    for e, attrs in enumerate(entity_attrs):
        for name, vals in attrs.items():
            for v in vals:
                if v not in values:
                    values.append(v)
                triples.append((e, attribute_names.index(name), values.index(v)))
    return KnowledgeGraph(
        entity_uris=[f"{prefix}/e{i}" for i in range(len(entity_attrs))],
        relation_uris=[],
        attribute_names=[f"{prefix}/{n}" for n in attribute_names],
        values=values,
        attr_triples=triples,
    )


def _all(n1: int, n2: int) -> CandidateSets:
    return CandidateSets(left=tuple(range(n1)), right=tuple(range(n2)))


@pytest.fixture
def people():
    kg1 = _kg("zh", ["name", "age", "zip"], [
        {"name": ["alice"], "age": ["30"]},
        {"name": ["bob"]},
        {"zip": ["10115"]},
    ])
    kg2 = _kg("en", ["name", "age", "city"], [
        {"name": ["Alice"], "age": ["30"]},
        {"age": ["41"], "city": ["berlin"]},
        {"city": ["paris"]},
    ])
    return kg1, kg2


# ===========================================================================
# dice / jaccard
# ===========================================================================

class TestDice:
    @pytest.mark.parametrize(
        "a,b,expected",
        [
            ("abc", "abc", 1.0),
            ("ab", "cd", 0.0),
            ("night", "nacht", 0.25),
            ("", "", 1.0),
            ("", "ab", 0.0),
            ("ab", "", 0.0),
            ("a", "a", 1.0),
            ("a", "b", 0.0),
            ("Birth  Date", "birth date", 1.0),
            ("aa", "aaa", 2.0 / 3.0),
        ],
    )
    def test_values(self, a, b, expected):
        assert dice(a, b) == pytest.approx(expected)

    def test_symmetric(self):
        assert dice("date of birth", "birth date") == dice("birth date", "date of birth")


class TestJaccard:
    @pytest.mark.parametrize(
        "a,b,expected",
        [
            ({"a", "b"}, {"b", "c"}, 1.0 / 3.0),
            ({"a"}, {"a"}, 1.0),
            ({"a"}, {"b"}, 0.0),
            (set(), set(), 0.0),
            (set(), {"a"}, 0.0),
            ({1, 2, 3}, {1, 2, 3, 4}, 0.75),
            ([1, 1, 2], [2], 0.5),
        ],
    )
    def test_values(self, a, b, expected):
        assert jaccard(a, b) == pytest.approx(expected)
        assert jaccard(b, a) == pytest.approx(expected)


# ===========================================================================
# Attribute matching
# ===========================================================================

class TestMatchAttributes:
    def test_identical_lists_map_to_themselves(self):
        names = ["name", "birth date", "population"]
        alignment = match_attributes(names, names, 0.5)
        assert alignment.matched_pairs == {0: 0, 1: 1, 2: 2}

    def test_threshold_one_is_never_exceeded(self):
        names = ["name", "birth date"]
        assert len(match_attributes(names, names, 1.0)) == 0

    def test_tied_top_match_takes_lowest_id(self):
        # Both candidates share bigrams worth 14/21 and 12/18 with "birth date".
        assert dice("birth date", "date of birth") == pytest.approx(2.0 / 3.0)
        assert dice("birth date", "death date") == pytest.approx(2.0 / 3.0)
        assert match_attributes(["birth date"], ["date of birth", "death date"], 0.5).matched_pairs == {0: 0}
        assert match_attributes(["birth date"], ["death date", "date of birth"], 0.5).matched_pairs == {0: 0}

    def test_below_threshold_dropped(self):
        alignment = match_attributes(["zip"], ["city"], 0.5)
        assert alignment.matched_pairs == {}

    def test_empty_target_list(self):
        assert len(match_attributes(["name"], [], 0.5)) == 0

    def test_uri_local_names_compared(self, people):
        kg1, kg2 = people
        alignment = align_attributes(*people, threshold=0.5)
        assert alignment.matched_pairs == {0: 0, 1: 1}
        assert kg1.attribute_names[0] != kg2.attribute_names[0]

    def test_normalizer_applied_before_matching(self):
        kg1 = _kg("zh", ["xingming"], [{"xingming": ["x"]}])
        kg2 = _kg("en", ["name"], [{"name": ["x"]}])
        assert align_attributes(kg1, kg2, 0.5).matched_pairs == {}
        assert align_attributes(kg1, kg2, 0.5, normalizer={"zh/xingming": "name"}).matched_pairs == {0: 0}

    def test_normalize_name(self):
        assert normalize_name("http://dbpedia.org/property/birth_Date") == "birth date"
        assert normalize_name("http://x.org/onto#Population") == "population"


# ===========================================================================
# Similarity matrices
# ===========================================================================

class TestAttrSimilarity:
    def test_hand_computed_table(self, people):
        kg1, kg2 = people
        alignment = align_attributes(kg1, kg2, 0.5)
        s = attr_similarity(kg1, kg2, alignment, _all(3, 3))
        np.testing.assert_allclose(s.values, [[1.0, 0.5, 0.0], [0.5, 0.0, 0.0], [0.0, 0.0, 0.0]])
        assert tuple(s.row_ids) == (0, 1, 2)

    def test_candidate_subset(self, people):
        kg1, kg2 = people
        alignment = align_attributes(kg1, kg2, 0.5)
        s = attr_similarity(kg1, kg2, alignment, CandidateSets(left=(1,), right=(0, 2)))
        np.testing.assert_allclose(s.values, [[0.5, 0.0]])

    def test_attribute_on_neither_side_changes_nothing(self, people):
        kg1, kg2 = people
        before = attr_similarity(kg1, kg2, align_attributes(kg1, kg2, 0.5), _all(3, 3)).values
        kg1.attribute_names.append("zh/unused")
        kg2.attribute_names.append("en/unused")
        after = attr_similarity(kg1, kg2, align_attributes(kg1, kg2, 0.5), _all(3, 3)).values
        np.testing.assert_array_equal(before, after)


class TestAttrValueSimilarity:
    def test_mean_of_per_attribute_jaccard(self):
        kg1 = _kg("zh", ["name", "tag"], [{"name": ["alice"], "tag": ["a", "b"]}])
        kg2 = _kg("en", ["name", "tag"], [{"name": ["alice"], "tag": ["b", "c"]}])
        s = attr_value_similarity(kg1, kg2, align_attributes(kg1, kg2, 0.5), _all(1, 1))
        assert s.values[0, 0] == pytest.approx(2.0 / 3.0)

    def test_people(self, people):
        kg1, kg2 = people
        s = attr_value_similarity(kg1, kg2, align_attributes(kg1, kg2, 0.5), _all(3, 3))
        # e0/f0 share name (alice == Alice after normalisation) and age 30
        assert s.values[0, 0] == pytest.approx(1.0)
        # e0/f1 share only age, with different values
        assert s.values[0, 1] == 0.0
        assert np.all(s.values[2] == 0.0)

    def test_no_common_attributes(self):
        kg1 = _kg("zh", ["name"], [{"name": ["x"]}])
        kg2 = _kg("en", ["name", "age"], [{"age": ["x"]}])
        s = attr_value_similarity(kg1, kg2, align_attributes(kg1, kg2, 0.5), _all(1, 1))
        assert s.values[0, 0] == 0.0

    def test_bounded(self, small_synth):
        kg1, kg2, _, _ = small_synth
        alignment = align_attributes(kg1, kg2, 0.5)
        for s in (attr_similarity(kg1, kg2, alignment, _all(30, 30)),
                  attr_value_similarity(kg1, kg2, alignment, _all(30, 30))):
            assert s.values.min() >= 0.0 and s.values.max() <= 1.0 + 1e-12


class TestCombineSimilarity:
    def test_rel_only_weights(self, rng):
        rel = rng.random((2, 2))
        out = combine_similarity(rel, rng.random((2, 2)), rng.random((2, 2)), SimilarityWeights(1.0, 0.0, 0.0))
        np.testing.assert_allclose(out, rel)

    def test_default_weights_on_ones(self):
        ones = np.ones((3, 3))
        out = combine_similarity(ones, ones, ones, SimilarityWeights(0.1, 0.5, 0.4))
        np.testing.assert_allclose(out, ones)

    def test_weighted_sum(self, rng):
        a, b, c = rng.random((2, 2)), rng.random((2, 2)), rng.random((2, 2))
        out = combine_similarity(a, b, c, SimilarityWeights(0.2, 0.3, 0.5))
        np.testing.assert_allclose(out, 0.2 * a + 0.3 * b + 0.5 * c)

    def test_missing_matrices_count_as_zero(self):
        out = combine_similarity(np.full((2, 2), 0.5), None, None, SimilarityWeights(0.1, 0.5, 0.4))
        np.testing.assert_allclose(out, np.full((2, 2), 0.05))

    def test_keeps_entity_ids(self):
        rel = SimilarityMatrix(values=np.ones((1, 2)), row_ids=[5], col_ids=[7, 8])
        out = combine_similarity(rel, np.zeros((1, 2)), None)
        assert isinstance(out, SimilarityMatrix)
        assert tuple(out.col_ids) == (7, 8)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            combine_similarity(np.ones((2, 2)), np.ones((2, 3)), None)

    def test_weights_out_of_range(self):
        with pytest.raises(ValueError):
            SimilarityWeights(1.5, 0.0, 0.0)


# ===========================================================================
# Files
# ===========================================================================

class TestFiles:
    def test_load_normalizer(self, tmp_path: Path):
        path = tmp_path / "names.tsv"
        path.write_text("xingming\tname\n\nshengri\tbirth date\n", encoding="utf-8")
        assert load_normalizer(path) == {"xingming": "name", "shengri": "birth date"}

    def test_normalizer_bad_line(self, tmp_path: Path):
        path = tmp_path / "names.tsv"
        path.write_text("a\tb\nbroken\n", encoding="utf-8")
        with pytest.raises(DatasetParseError) as exc:
            load_normalizer(path)
        assert exc.value.line_number == 2

    def test_normalizer_missing(self, tmp_path: Path):
        with pytest.raises(DatasetFileMissingError):
            load_normalizer(tmp_path / "none.tsv")

    def test_alignment_report(self, tmp_path: Path, people):
        kg1, kg2 = people
        alignment = align_attributes(kg1, kg2, 0.5)
        path = tmp_path / "attrs.csv"
        write_alignment_report(alignment, kg1.attribute_names, kg2.attribute_names, path)
        df = pd.read_csv(path)
        assert list(df.columns) == ["attr1", "attr2", "dice"]
        assert df["attr1"].tolist() == ["zh/name", "zh/age"]
        assert df["dice"].tolist() == [1.0, 1.0]
