"""Tests for dataset loading, saving and embedding files."""
from pathlib import Path

import numpy as np
import pytest

from models.entities import KnowledgeGraph, SeedPairs
from services.kg_loader import (
    DatasetFileMissingError,
    DatasetIntegrityError,
    DatasetParseError,
    load_dataset,
    load_embeddings,
    load_side_embeddings,
    save_dataset,
)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _write_minimal(directory: Path, triples_1: str = "0\t10\t1\n", ref: str = "0\t2\n") -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "ent_ids_1").write_text("0\thttp://zh/a\n1\thttp://zh/b\n", encoding="utf-8")
    (directory / "ent_ids_2").write_text("2\thttp://en/a\n3\thttp://en/b\n", encoding="utf-8")
    (directory / "triples_1").write_text(triples_1, encoding="utf-8")
    (directory / "triples_2").write_text("2\t11\t3\n", encoding="utf-8")
    (directory / "ref_ent_ids").write_text(ref, encoding="utf-8")
    return directory


def _named_values(kg: KnowledgeGraph):
    return {
        (kg.entity_uris[e], kg.attribute_names[a], kg.values[v]) for e, a, v in kg.attr_triples.tolist()
    }


# ===========================================================================
# load_dataset
# ===========================================================================

class TestLoadDataset:
    def test_dense_reindexing(self, tmp_path: Path):
        kg1, kg2, seeds = load_dataset(_write_minimal(tmp_path / "ds"))
        assert kg1.entity_uris == ["http://zh/a", "http://zh/b"]
        assert kg2.entity_uris == ["http://en/a", "http://en/b"]
        assert kg1.rel_triples.tolist() == [[0, 0, 1]]
        assert kg2.rel_triples.tolist() == [[0, 0, 1]]
        assert seeds.pairs == ((0, 0),)

    def test_relations_named_by_raw_id_without_rel_ids(self, tmp_path: Path):
        kg1, _, _ = load_dataset(_write_minimal(tmp_path / "ds"))
        assert kg1.relation_uris == ["10"]

    def test_empty_triples_file_loads(self, tmp_path: Path):
        kg1, _, _ = load_dataset(_write_minimal(tmp_path / "ds", triples_1=""))
        assert kg1.n_entities == 2
        assert len(kg1.rel_triples) == 0
        assert kg1.n_relations == 0

    def test_duplicate_triples_dropped(self, tmp_path: Path):
        kg1, _, _ = load_dataset(_write_minimal(tmp_path / "ds", triples_1="0\t10\t1\n0\t10\t1\n"))
        assert len(kg1.rel_triples) == 1

    def test_missing_file_names_the_file(self, tmp_path: Path):
        directory = _write_minimal(tmp_path / "ds")
        (directory / "triples_2").unlink()
        with pytest.raises(DatasetFileMissingError) as exc:
            load_dataset(directory)
        assert exc.value.path.name == "triples_2"
        assert "triples_2" in str(exc.value)

    def test_missing_directory(self, tmp_path: Path):
        with pytest.raises(DatasetFileMissingError):
            load_dataset(tmp_path / "nope")

    def test_malformed_line_reports_line_number(self, tmp_path: Path):
        directory = _write_minimal(tmp_path / "ds", triples_1="0\t10\t1\n0\t10\n")
        with pytest.raises(DatasetParseError) as exc:
            load_dataset(directory)
        assert exc.value.line_number == 2
        assert exc.value.path.name == "triples_1"

    def test_non_integer_id(self, tmp_path: Path):
        directory = _write_minimal(tmp_path / "ds", triples_1="0\tx\t1\n")
        with pytest.raises(DatasetParseError) as exc:
            load_dataset(directory)
        assert exc.value.line_number == 1

    def test_dangling_entity_in_triple(self, tmp_path: Path):
        directory = _write_minimal(tmp_path / "ds", triples_1="0\t10\t7\n")
        with pytest.raises(DatasetIntegrityError):
            load_dataset(directory)

    def test_dangling_entity_in_reference(self, tmp_path: Path):
        directory = _write_minimal(tmp_path / "ds", ref="0\t9\n")
        with pytest.raises(DatasetIntegrityError):
            load_dataset(directory)

    def test_reference_not_one_to_one(self, tmp_path: Path):
        directory = _write_minimal(tmp_path / "ds", ref="0\t2\n1\t2\n")
        with pytest.raises(DatasetIntegrityError):
            load_dataset(directory)

    def test_attributes_interned(self, tmp_path: Path):
        directory = _write_minimal(tmp_path / "ds")
        (directory / "attrs_1").write_text(
            "http://zh/a\thttp://zh/name\tAlice\nhttp://zh/b\thttp://zh/name\tBob\n", encoding="utf-8"
        )
        kg1, kg2, _ = load_dataset(directory)
        assert kg1.attribute_names == ["http://zh/name"]
        assert kg1.values == ["Alice", "Bob"]
        assert kg1.attr_triples.tolist() == [[0, 0, 0], [1, 0, 1]]
        assert kg2.n_attributes == 0

    def test_attribute_for_unknown_entity(self, tmp_path: Path):
        directory = _write_minimal(tmp_path / "ds")
        (directory / "attrs_1").write_text("http://zh/zz\tname\tx\n", encoding="utf-8")
        with pytest.raises(DatasetIntegrityError):
            load_dataset(directory)


# ===========================================================================
# save_dataset round trip
# ===========================================================================

class TestSaveDataset:
    def test_toy_round_trip(self, tmp_path: Path, toy_pair):
        kg1, kg2, seeds = toy_pair
        save_dataset(kg1, kg2, seeds, tmp_path / "toy")
        loaded1, loaded2, loaded_seeds = load_dataset(tmp_path / "toy")
        for original, loaded in ((kg1, loaded1), (kg2, loaded2)):
            assert loaded.entity_uris == original.entity_uris
            assert loaded.relation_uris == original.relation_uris
            np.testing.assert_array_equal(loaded.rel_triples, original.rel_triples)
        assert loaded_seeds == seeds

    def test_global_id_space_in_files(self, tmp_path: Path, toy_pair):
        kg1, kg2, seeds = toy_pair
        save_dataset(kg1, kg2, seeds, tmp_path / "toy")
        assert (tmp_path / "toy" / "ent_ids_2").read_text().splitlines() == ["2\ten/a", "3\ten/b"]
        assert (tmp_path / "toy" / "ref_ent_ids").read_text().splitlines() == ["0\t2"]

    def test_synthetic_round_trip_with_embeddings(self, tmp_path: Path, small_synth):
        kg1, kg2, truth, (x1, x2) = small_synth
        save_dataset(kg1, kg2, truth, tmp_path / "synth", embeddings=(x1, x2))
        loaded1, loaded2, loaded_truth = load_dataset(tmp_path / "synth")
        assert loaded_truth == truth
        np.testing.assert_array_equal(loaded1.rel_triples, kg1.rel_triples)
        np.testing.assert_array_equal(loaded2.rel_triples, kg2.rel_triples)
        assert _named_values(loaded1) == _named_values(kg1)
        e1, e2 = load_side_embeddings(tmp_path / "synth", loaded1, loaded2)
        np.testing.assert_array_equal(e1, x1)
        np.testing.assert_array_equal(e2, x2)


# ===========================================================================
# Embedding files
# ===========================================================================

class TestEmbeddings:
    def test_reads_header_and_rows(self, tmp_path: Path):
        path = tmp_path / "emb_1"
        path.write_text("2 3\n0.1 0.2 0.3\n1 2 3\n", encoding="utf-8")
        x = load_embeddings(path, 2)
        assert x.shape == (2, 3)
        assert x[1].tolist() == [1.0, 2.0, 3.0]

    def test_row_count_mismatch(self, tmp_path: Path):
        path = tmp_path / "emb_1"
        path.write_text("3 2\n0 0\n1 1\n", encoding="utf-8")
        with pytest.raises(DatasetIntegrityError):
            load_embeddings(path, 3)

    def test_header_entity_count_mismatch(self, tmp_path: Path):
        path = tmp_path / "emb_1"
        path.write_text("2 2\n0 0\n1 1\n", encoding="utf-8")
        with pytest.raises(DatasetIntegrityError):
            load_embeddings(path, 5)

    def test_wrong_width_reports_line(self, tmp_path: Path):
        path = tmp_path / "emb_1"
        path.write_text("2 2\n0 0\n1 1 1\n", encoding="utf-8")
        with pytest.raises(DatasetParseError) as exc:
            load_embeddings(path, 2)
        assert exc.value.line_number == 3

    def test_absent_files_give_none(self, tmp_path: Path, toy_pair):
        kg1, kg2, _ = toy_pair
        assert load_side_embeddings(tmp_path, kg1, kg2) is None


# ===========================================================================
# KnowledgeGraph model
# ===========================================================================

class TestKnowledgeGraph:
    def test_triples_are_read_only(self, toy_kg: KnowledgeGraph):
        with pytest.raises(ValueError):
            toy_kg.rel_triples[0, 0] = 3

    def test_integrity_errors_flag_dangling_ids(self):
        kg = KnowledgeGraph(entity_uris=["a"], relation_uris=["r"], rel_triples=[(0, 0, 4)])
        assert kg.integrity_errors()

    def test_dict_round_trip(self, toy_kg: KnowledgeGraph):
        again = KnowledgeGraph.from_dict(toy_kg.to_dict())
        assert again.to_dict() == toy_kg.to_dict()

    def test_seed_pairs_must_be_one_to_one(self):
        with pytest.raises(ValueError):
            SeedPairs(((0, 1), (2, 1)))
