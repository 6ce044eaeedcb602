"""Reading and writing DBP15K-style alignment datasets.

Directory layout (tab separated):
    triples_1, triples_2     head  rel  tail   (integer ids)
    ent_ids_1, ent_ids_2     id    uri
    ref_ent_ids              id1   id2
    rel_ids_1, rel_ids_2     id    uri         (optional)
    attrs_1, attrs_2         entity_uri  attr_uri  value   (optional)
    emb_1, emb_2             "|E| d" header, then one row per entity (optional)

Ids in the files are global; each side is re-indexed densely in ``ent_ids`` order.
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import ATTR_FILES, EMB_FILES, ENT_IDS_FILES, REF_FILE, REL_IDS_FILES, TRIPLES_FILES
from models.entities import KnowledgeGraph, SeedPairs

logger = logging.getLogger(__name__)


class DatasetError(Exception):
    """Base class for dataset loading failures."""
    pass


class DatasetFileMissingError(DatasetError):
    def __init__(self, path: Path):
        super().__init__(f"Required dataset file not found: {path}")
        self.path = path


class DatasetParseError(DatasetError):
    def __init__(self, path: Path, line_number: int, reason: str):
        super().__init__(f"{path}:{line_number}: {reason}")
        self.path = path
        self.line_number = line_number


class DatasetIntegrityError(DatasetError):
    """A triple or seed references an id that does not exist."""
    pass


# ============================================================================
# Line readers
# ============================================================================

def _read_lines(path: Path, required: bool = True) -> Optional[List[str]]:
    if not path.exists():
        if required:
            raise DatasetFileMissingError(path)
        return None
    try:
        return path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as e:
        logger.error(f"Cannot read {path}: {e}")
        raise DatasetError(f"Cannot read {path}: {e}") from e


def _parse_int_rows(path: Path, width: int) -> List[Tuple[int, ...]]:
    rows = []
    for n, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != width:
            raise DatasetParseError(path, n, f"expected {width} tab-separated fields, got {len(parts)}")
        try:
            rows.append(tuple(int(p) for p in parts))
        except ValueError as e:
            raise DatasetParseError(path, n, f"non-integer id ({e})") from e
    return rows


def _parse_id_table(path: Path, required: bool = True) -> Optional[List[Tuple[int, str]]]:
    lines = _read_lines(path, required=required)
    if lines is None:
        return None
    rows = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split("\t", 1)
        if len(parts) != 2:
            raise DatasetParseError(path, n, "expected 'id<TAB>uri'")
        try:
            rows.append((int(parts[0]), parts[1]))
        except ValueError as e:
            raise DatasetParseError(path, n, f"non-integer id ({e})") from e
    return rows


# ============================================================================
# Loading
# ============================================================================

def _load_side(directory: Path, side: int) -> Tuple[KnowledgeGraph, Dict[int, int]]:
    ent_path = directory / ENT_IDS_FILES[side]
    triples_path = directory / TRIPLES_FILES[side]
    ent_rows = _parse_id_table(ent_path)
    triple_rows = _parse_int_rows(triples_path, 3)

    ent_index: Dict[int, int] = {}
    entity_uris: List[str] = []
    for raw_id, uri in ent_rows:
        if raw_id in ent_index:
            raise DatasetIntegrityError(f"{ent_path}: duplicate entity id {raw_id}")
        ent_index[raw_id] = len(entity_uris)
        entity_uris.append(uri)

    rel_rows = _parse_id_table(directory / REL_IDS_FILES[side], required=False)
    rel_index: Dict[int, int] = {}
    relation_uris: List[str] = []
    if rel_rows is not None:
        for raw_id, uri in rel_rows:
            rel_index[raw_id] = len(relation_uris)
            relation_uris.append(uri)
    else:
        for raw_id in sorted({r for _, r, _ in triple_rows}):
            rel_index[raw_id] = len(relation_uris)
            relation_uris.append(str(raw_id))

    triples = []
    for n, (h, r, t) in enumerate(triple_rows, start=1):
        if h not in ent_index or t not in ent_index:
            raise DatasetIntegrityError(f"{triples_path}: triple {n} references unknown entity")
        if r not in rel_index:
            raise DatasetIntegrityError(f"{triples_path}: triple {n} references unknown relation {r}")
        triples.append((ent_index[h], rel_index[r], ent_index[t]))
    unique = list(dict.fromkeys(triples))
    if len(unique) < len(triples):
        logger.info(f"{triples_path.name}: dropped {len(triples) - len(unique)} duplicate triples")

    attribute_names, values, attr_triples = _load_attributes(directory / ATTR_FILES[side], entity_uris)

    kg = KnowledgeGraph(
        entity_uris=entity_uris,
        relation_uris=relation_uris,
        attribute_names=attribute_names,
        values=values,
        rel_triples=unique,
        attr_triples=attr_triples,
    )
    problems = kg.integrity_errors()
    if problems:
        raise DatasetIntegrityError(f"KG{side + 1}: " + "; ".join(problems))
    return kg, ent_index


def _load_attributes(path: Path, entity_uris: Sequence[str]) -> Tuple[List[str], List[str], List[Tuple[int, int, int]]]:
    lines = _read_lines(path, required=False)
    if lines is None:
        return [], [], []
    uri_index = {uri: i for i, uri in enumerate(entity_uris)}
    attr_index: Dict[str, int] = {}
    value_index: Dict[str, int] = {}
    triples = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split("\t", 2)
        if len(parts) != 3:
            raise DatasetParseError(path, n, "expected 'entity_uri<TAB>attr_uri<TAB>value'")
        uri, attr, value = parts
        if uri not in uri_index:
            raise DatasetIntegrityError(f"{path}: line {n} references unknown entity {uri}")
        a = attr_index.setdefault(attr, len(attr_index))
        v = value_index.setdefault(value, len(value_index))
        triples.append((uri_index[uri], a, v))
    return list(attr_index), list(value_index), list(dict.fromkeys(triples))


def load_dataset(directory_path: Path) -> Tuple[KnowledgeGraph, KnowledgeGraph, SeedPairs]:
    """Load both KGs and the reference alignment from a dataset directory."""
    directory = Path(directory_path)
    if not directory.is_dir():
        raise DatasetFileMissingError(directory)

    kg1, index1 = _load_side(directory, 0)
    kg2, index2 = _load_side(directory, 1)

    ref_path = directory / REF_FILE
    pairs = []
    for n, (e1, e2) in enumerate(_parse_int_rows(ref_path, 2), start=1):
        if e1 not in index1 or e2 not in index2:
            raise DatasetIntegrityError(f"{ref_path}: pair {n} references unknown entity")
        pairs.append((index1[e1], index2[e2]))
    try:
        seeds = SeedPairs(tuple(pairs))
    except ValueError as e:
        raise DatasetIntegrityError(f"{ref_path}: {e}") from e

    for side, kg in enumerate((kg1, kg2), start=1):
        logger.info(
            f"KG{side}: {kg.n_entities} entities, {kg.n_relations} relations, "
            f"{len(kg.rel_triples)} relation triples, {len(kg.attr_triples)} attribute triples"
        )
    logger.info(f"Reference alignment: {len(seeds)} pairs")
    return kg1, kg2, seeds


def load_embeddings(path: Path, n_entities: int) -> np.ndarray:
    """Read an embedding file: header ``|E| d`` then one row per entity."""
    path = Path(path)
    lines = _read_lines(path)
    if not lines:
        raise DatasetParseError(path, 1, "missing '|E| d' header")
    try:
        n, d = (int(x) for x in lines[0].split())
    except ValueError as e:
        raise DatasetParseError(path, 1, f"malformed header ({e})") from e
    if n != n_entities:
        raise DatasetIntegrityError(f"{path}: header declares {n} rows but the KG has {n_entities} entities")
    rows = [line for line in lines[1:] if line.strip()]
    if len(rows) != n:
        raise DatasetIntegrityError(f"{path}: expected {n} rows, found {len(rows)}")
    matrix = np.empty((n, d), dtype=np.float64)
    for i, line in enumerate(rows):
        try:
            row = np.array(line.split(), dtype=np.float64)
        except ValueError as e:
            raise DatasetParseError(path, i + 2, f"non-numeric value ({e})") from e
        if row.shape[0] != d:
            raise DatasetParseError(path, i + 2, f"expected {d} values, got {row.shape[0]}")
        matrix[i] = row
    return matrix


def load_side_embeddings(directory_path: Path, kg1: KnowledgeGraph, kg2: KnowledgeGraph) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Embeddings for both sides, or None when the directory has none."""
    directory = Path(directory_path)
    paths = [directory / name for name in EMB_FILES]
    if not all(p.exists() for p in paths):
        return None
    return load_embeddings(paths[0], kg1.n_entities), load_embeddings(paths[1], kg2.n_entities)


# ============================================================================
# Writing
# ============================================================================

def _write(path: Path, lines: List[str]) -> None:
    try:
        path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    except OSError as e:
        logger.error(f"Cannot write {path}: {e}")
        raise DatasetError(f"Cannot write {path}: {e}") from e


def save_dataset(
    kg1: KnowledgeGraph,
    kg2: KnowledgeGraph,
    seeds: SeedPairs,
    directory_path: Path,
    embeddings: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> None:
    """Write the layout read by :func:`load_dataset`.

    KG2 ids are offset past KG1's so the files use one global id space.
    """
    directory = Path(directory_path)
    directory.mkdir(parents=True, exist_ok=True)
    ent_offsets = (0, kg1.n_entities)
    rel_offsets = (0, kg1.n_relations)

    for side, kg in enumerate((kg1, kg2)):
        eo, ro = ent_offsets[side], rel_offsets[side]
        _write(directory / ENT_IDS_FILES[side], [f"{i + eo}\t{uri}" for i, uri in enumerate(kg.entity_uris)])
        _write(directory / REL_IDS_FILES[side], [f"{i + ro}\t{uri}" for i, uri in enumerate(kg.relation_uris)])
        _write(
            directory / TRIPLES_FILES[side],
            [f"{h + eo}\t{r + ro}\t{t + eo}" for h, r, t in kg.rel_triples.tolist()],
        )
        _write(
            directory / ATTR_FILES[side],
            [
                f"{kg.entity_uris[e]}\t{kg.attribute_names[a]}\t{kg.values[v]}"
                for e, a, v in kg.attr_triples.tolist()
            ],
        )
        if embeddings is not None:
            matrix = embeddings[side]
            lines = [f"{matrix.shape[0]} {matrix.shape[1]}"]
            lines += [" ".join(repr(float(x)) for x in row) for row in matrix]
            _write(directory / EMB_FILES[side], lines)

    _write(directory / REF_FILE, [f"{a}\t{b + ent_offsets[1]}" for a, b in seeds])
    logger.info(f"Wrote dataset to {directory}")
