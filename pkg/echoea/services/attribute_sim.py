"""Attribute matching across KGs and the attribute-based similarity matrices.

Attribute names are matched by bigram Dice after normalisation; entity
similarity is Jaccard over matched attribute sets (``attr_similarity``) and
the mean per-attribute Jaccard over value sets (``attr_value_similarity``).
"""
import logging
import re
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp

from config import DEFAULT_ATTR_MATCH_THRESHOLD
from models.entities import AttributeAlignment, CandidateSets, KnowledgeGraph, SimilarityMatrix, SimilarityWeights
from services.kg_loader import DatasetParseError, DatasetFileMissingError

logger = logging.getLogger(__name__)

_WHITESPACE = re.compile(r"\s+")

MatrixLike = Union[SimilarityMatrix, np.ndarray]
AttrMatrix = Union[SimilarityMatrix, np.ndarray, sp.spmatrix]


# ============================================================================
# String and set similarity
# ============================================================================

def normalize_text(s: str) -> str:
    return _WHITESPACE.sub(" ", s.strip().lower())


def normalize_name(name: str, normalizer: Optional[Dict[str, str]] = None) -> str:
    """Map through the normalizer, keep the URI local name, lowercase and collapse spaces."""
    if normalizer:
        name = normalizer.get(name, name)
    local = re.split(r"[/#]", name.rstrip("/#"))[-1]
    return normalize_text(local.replace("_", " "))


def _bigrams(s: str) -> Counter:
    return Counter(s[i:i + 2] for i in range(len(s) - 1))


def dice(s1: str, s2: str) -> float:
    """Sorensen-Dice over multiset character bigrams."""
    a, b = normalize_text(s1), normalize_text(s2)
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    ba, bb = _bigrams(a), _bigrams(b)
    total = sum(ba.values()) + sum(bb.values())
    if total == 0:
        # Single characters have no bigrams
        return 1.0 if a == b else 0.0
    return 2.0 * sum((ba & bb).values()) / total


def jaccard(a: Iterable, b: Iterable) -> float:
    """|A & B| / |A | B|, with J(empty, empty) = 0."""
    set_a, set_b = set(a), set(b)
    union = set_a | set_b
    if not union:
        return 0.0
    return len(set_a & set_b) / len(union)


def match_attributes(
    attrs1: Sequence[str],
    attrs2: Sequence[str],
    threshold: float = DEFAULT_ATTR_MATCH_THRESHOLD,
) -> AttributeAlignment:
    """Top-1 Dice match for each KG1 attribute, kept only if strictly above threshold.

    Ties go to the lowest KG2 id.
    """
    matched: Dict[int, int] = {}
    scores: Dict[int, float] = {}
    if not attrs2:
        return AttributeAlignment(matched, scores, threshold)
    for i, name in enumerate(attrs1):
        row = [dice(name, other) for other in attrs2]
        j = int(np.argmax(row))
        if row[j] > threshold:
            matched[i] = j
            scores[i] = row[j]
    logger.info(f"Matched {len(matched)} of {len(attrs1)} KG1 attributes (threshold {threshold})")
    return AttributeAlignment(matched, scores, threshold)


def align_attributes(
    kg1: KnowledgeGraph,
    kg2: KnowledgeGraph,
    threshold: float = DEFAULT_ATTR_MATCH_THRESHOLD,
    normalizer: Optional[Dict[str, str]] = None,
) -> AttributeAlignment:
    names1 = [normalize_name(n, normalizer) for n in kg1.attribute_names]
    names2 = [normalize_name(n, normalizer) for n in kg2.attribute_names]
    return match_attributes(names1, names2, threshold)


# ============================================================================
# Entity similarity matrices
# ============================================================================

def _incidence(rows: List[Set[int]], n_cols: int) -> sp.csr_matrix:
    indptr = [0]
    indices: List[int] = []
    for s in rows:
        indices.extend(sorted(s))
        indptr.append(len(indices))
    data = np.ones(len(indices), dtype=np.float64)
    return sp.csr_matrix((data, indices, indptr), shape=(len(rows), n_cols))


def _shared_attribute_sets(kg1: KnowledgeGraph, kg2: KnowledgeGraph, alignment: AttributeAlignment,
                           candidates: CandidateSets):
    sets1 = kg1.attribute_sets()
    sets2 = kg2.attribute_sets()
    targets = alignment.targets()
    left = [{alignment.matched_pairs[a] for a in sets1[e] if a in alignment.matched_pairs} for e in candidates.left]
    right = [{a for a in sets2[e] if a in targets} for e in candidates.right]
    return left, right


def _jaccard_matrix(left: List[Set[int]], right: List[Set[int]], n_tokens: int) -> sp.csr_matrix:
    """Pairwise Jaccard of token sets; only pairs sharing a token are stored."""
    lm = _incidence(left, n_tokens)
    rm = _incidence(right, n_tokens)
    inter = (lm @ rm.T).tocoo()
    size_l = np.asarray(lm.sum(axis=1)).ravel()
    size_r = np.asarray(rm.sum(axis=1)).ravel()
    union = size_l[inter.row] + size_r[inter.col] - inter.data
    return sp.csr_matrix((inter.data / union, (inter.row, inter.col)), shape=(len(left), len(right)))


def attr_similarity_sparse(kg1: KnowledgeGraph, kg2: KnowledgeGraph, alignment: AttributeAlignment,
                           candidates: CandidateSets) -> sp.csr_matrix:
    left, right = _shared_attribute_sets(kg1, kg2, alignment, candidates)
    return _jaccard_matrix(left, right, max(kg2.n_attributes, 1))


def attr_similarity(kg1: KnowledgeGraph, kg2: KnowledgeGraph, alignment: AttributeAlignment,
                    candidates: CandidateSets) -> SimilarityMatrix:
    """Jaccard of matched-attribute sets for every candidate pair."""
    return to_similarity(attr_similarity_sparse(kg1, kg2, alignment, candidates), candidates)


def attr_value_similarity_sparse(kg1: KnowledgeGraph, kg2: KnowledgeGraph, alignment: AttributeAlignment,
                                 candidates: CandidateSets) -> sp.csr_matrix:
    values1 = kg1.value_sets()
    values2 = kg2.value_sets()
    left_attrs, right_attrs = _shared_attribute_sets(kg1, kg2, alignment, candidates)
    n_attr = max(kg2.n_attributes, 1)
    shape = (len(candidates.left), len(candidates.right))

    # Values of KG1 entities keyed by the shared (KG2) attribute id
    left_values: List[Dict[int, Set[str]]] = []
    for e in candidates.left:
        merged: Dict[int, Set[str]] = {}
        for a, vals in values1[e].items():
            if a in alignment.matched_pairs:
                merged.setdefault(alignment.matched_pairs[a], set()).update(normalize_text(v) for v in vals)
        left_values.append(merged)
    right_values = [
        {a: {normalize_text(v) for v in vals} for a, vals in values2[e].items() if a in right_attrs[k]}
        for k, e in enumerate(candidates.right)
    ]

    common = (_incidence(left_attrs, n_attr) @ _incidence(right_attrs, n_attr).T).tocsr()
    total = sp.csr_matrix(shape, dtype=np.float64)
    for a in sorted(set().union(*left_attrs) & set().union(*right_attrs)):
        rows = [i for i, d in enumerate(left_values) if a in d]
        cols = [j for j, d in enumerate(right_values) if a in d]
        if not rows or not cols:
            continue
        vocab: Dict[str, int] = {}
        left_tokens = [{vocab.setdefault(v, len(vocab)) for v in left_values[i][a]} for i in rows]
        right_tokens = [{vocab.setdefault(v, len(vocab)) for v in right_values[j][a]} for j in cols]
        block = _jaccard_matrix(left_tokens, right_tokens, max(len(vocab), 1)).tocoo()
        total = total + sp.csr_matrix(
            (block.data, (np.asarray(rows)[block.row], np.asarray(cols)[block.col])), shape=shape
        )

    common = common.tocoo()
    counts = sp.csr_matrix((common.data, (common.row, common.col)), shape=shape)
    total = total.tocoo()
    denom = np.asarray(counts[total.row, total.col]).ravel() if total.nnz else np.zeros(0)
    return sp.csr_matrix((total.data / np.where(denom > 0, denom, 1.0), (total.row, total.col)), shape=shape)


def attr_value_similarity(kg1: KnowledgeGraph, kg2: KnowledgeGraph, alignment: AttributeAlignment,
                          candidates: CandidateSets) -> SimilarityMatrix:
    """Mean over common matched attributes of the Jaccard of their value sets."""
    return to_similarity(attr_value_similarity_sparse(kg1, kg2, alignment, candidates), candidates)


def to_similarity(m: sp.spmatrix, candidates: CandidateSets) -> SimilarityMatrix:
    """Dense view of a sparse candidate-pair matrix."""
    return SimilarityMatrix(values=m.toarray(), row_ids=candidates.left, col_ids=candidates.right)


def _values_of(m: Optional[AttrMatrix]) -> Optional[np.ndarray]:
    if m is None:
        return None
    if sp.issparse(m):
        return m.toarray()
    return m.values if isinstance(m, SimilarityMatrix) else np.asarray(m, dtype=np.float64)


def combine_similarity(
    s_rel: MatrixLike,
    s_attr: Optional[AttrMatrix],
    s_attr_value: Optional[AttrMatrix],
    weights: SimilarityWeights = SimilarityWeights(),
) -> MatrixLike:
    """Elementwise weighted sum; a missing attribute matrix counts as zeros.

    Sparse attribute matrices are densified here, one at a time.
    """
    rel = _values_of(s_rel)
    out = weights.rel * rel
    for name, m, w in (("S_attr", s_attr, weights.attr), ("S_attr_value", s_attr_value, weights.value)):
        arr = _values_of(m)
        if arr is None:
            continue
        if arr.shape != rel.shape:
            raise ValueError(f"{name} shape {arr.shape} does not match S_rel shape {rel.shape}")
        out = out + w * arr
    if isinstance(s_rel, SimilarityMatrix):
        return s_rel.with_values(out)
    return out


# ============================================================================
# Normalizer and report files
# ============================================================================

def load_normalizer(path: Path) -> Dict[str, str]:
    """Two-column (tab separated) name -> normalised name mapping."""
    path = Path(path)
    if not path.exists():
        raise DatasetFileMissingError(path)
    mapping: Dict[str, str] = {}
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DatasetParseError(path, n, "expected 'name<TAB>normalised name'")
        mapping[parts[0]] = parts[1]
    return mapping


def write_alignment_report(alignment: AttributeAlignment, names1: Sequence[str], names2: Sequence[str],
                           path: Path) -> None:
    rows = [
        {"attr1": names1[a1], "attr2": names2[a2], "dice": alignment.scores[a1]}
        for a1, a2 in sorted(alignment.matched_pairs.items())
    ]
    pd.DataFrame(rows, columns=["attr1", "attr2", "dice"]).to_csv(path, index=False, float_format="%.6f")
