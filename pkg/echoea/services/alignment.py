"""Similarity from embeddings, local and global alignment, and bootstrapped samples.

Pair sets are always expressed in entity ids (via the matrix row/col ids).
"""
import logging
from typing import Dict, List, Optional, Set, Tuple, Union

import numpy as np
import torch

from config import DEGENERATE_NORMALIZED_VALUE, DISTANCE_CHUNK_ROWS, Stage
from events import RunEvent, event_bus
from models.entities import AlignmentResult, CandidateSets, Pair, SimilarityMatrix, SimilarityWeights
from services.attribute_sim import AttrMatrix, combine_similarity

logger = logging.getLogger(__name__)

MatrixLike = Union[SimilarityMatrix, np.ndarray]


def as_similarity(s: MatrixLike) -> SimilarityMatrix:
    return s if isinstance(s, SimilarityMatrix) else SimilarityMatrix.from_array(s)


# ============================================================================
# Similarity from embeddings
# ============================================================================

def l1_distances(x1: torch.Tensor, x2: torch.Tensor, chunk_rows: int = DISTANCE_CHUNK_ROWS) -> np.ndarray:
    """Pairwise Manhattan distances, computed in row blocks."""
    x1 = torch.as_tensor(x1, dtype=torch.float64)
    x2 = torch.as_tensor(x2, dtype=torch.float64)
    with torch.no_grad():
        blocks = [torch.cdist(x1[i:i + chunk_rows], x2, p=1.0) for i in range(0, x1.shape[0], chunk_rows)]
    return torch.cat(blocks).numpy() if blocks else np.zeros((0, x2.shape[0]))


def min_max_normalize(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.full_like(values, DEGENERATE_NORMALIZED_VALUE, dtype=np.float64)
    return (values - lo) / (hi - lo)


def rel_similarity(x1: torch.Tensor, x2: torch.Tensor, candidates: CandidateSets) -> SimilarityMatrix:
    """Negative L1 distance between candidate embeddings, min-max scaled to [0, 1]."""
    if candidates.is_empty():
        raise ValueError("Candidate sets must be non-empty on both sides")
    left = torch.as_tensor(list(candidates.left), dtype=torch.long)
    right = torch.as_tensor(list(candidates.right), dtype=torch.long)
    x1 = torch.as_tensor(x1).detach()
    x2 = torch.as_tensor(x2).detach()
    dist = l1_distances(x1[left], x2[right])
    return SimilarityMatrix(values=min_max_normalize(-dist), row_ids=candidates.left, col_ids=candidates.right)


def fine_grained_similarity(s: MatrixLike) -> MatrixLike:
    """Sum of the row-wise and column-wise softmax of S."""
    values = as_similarity(s).values
    rows = np.exp(values - values.max(axis=1, keepdims=True))
    rows /= rows.sum(axis=1, keepdims=True)
    cols = np.exp(values - values.max(axis=0, keepdims=True))
    cols /= cols.sum(axis=0, keepdims=True)
    out = rows + cols
    return s.with_values(out) if isinstance(s, SimilarityMatrix) else out


# ============================================================================
# Local and global alignment
# ============================================================================

def local_align(s: MatrixLike) -> Tuple[Set[Pair], Set[Pair]]:
    """Mutual nearest neighbours are positives; one-sided nearest neighbours negatives.

    ``np.argmax`` returns the first maximum, so ties go to the lowest index.
    """
    sim = as_similarity(s)
    values = sim.values
    if values.size == 0:
        return set(), set()
    row_best = np.argmax(values, axis=1)
    col_best = np.argmax(values, axis=0)
    p1 = {sim.pair(i, int(j)) for i, j in enumerate(row_best)}
    p2 = {sim.pair(int(i), j) for j, i in enumerate(col_best)}
    plus = p1 & p2
    return plus, (p1 | p2) - plus


def global_align(s: MatrixLike) -> Set[Pair]:
    """One-to-one stable matching by deferred acceptance, left side proposing.

    Left entities propose in decreasing S (ties: lower column first); a right
    entity keeps the proposer with the higher S (ties: lower row). With more
    rows than columns the extra rows stay unmatched, and vice versa.
    """
    sim = as_similarity(s)
    values = sim.values
    n_rows, n_cols = values.shape
    if n_rows == 0 or n_cols == 0:
        return set()

    next_choice = np.zeros(n_rows, dtype=np.int64)
    held_by: Dict[int, int] = {}
    preferences: Dict[int, np.ndarray] = {}
    free = list(range(n_rows - 1, -1, -1))

    while free:
        i = free.pop()
        if next_choice[i] >= n_cols:
            continue
        if i not in preferences:
            preferences[i] = np.argsort(-values[i], kind="stable")
        j = int(preferences[i][next_choice[i]])
        next_choice[i] += 1
        current = held_by.get(j)
        if current is None:
            held_by[j] = i
        elif values[i, j] > values[current, j] or (values[i, j] == values[current, j] and i < current):
            held_by[j] = i
            free.append(current)
        else:
            free.append(i)

    return {sim.pair(i, j) for j, i in held_by.items()}


def find_unstable_pair(s: MatrixLike, matching: Set[Pair]) -> Optional[Pair]:
    """A pair that would both rather be matched to each other, or None."""
    sim = as_similarity(s)
    values = sim.values
    row_index, col_index = sim.row_index(), sim.col_index()
    row_score = np.full(values.shape[0], -np.inf)
    col_score = np.full(values.shape[1], -np.inf)
    for e1, e2 in matching:
        i, j = row_index[e1], col_index[e2]
        row_score[i] = values[i, j]
        col_score[j] = values[i, j]
    for i in range(values.shape[0]):
        for j in range(values.shape[1]):
            if values[i, j] > row_score[i] and values[i, j] > col_score[j]:
                return sim.pair(i, j)
    return None


# ============================================================================
# Bootstrapping
# ============================================================================

def abgs(
    s_rel: MatrixLike,
    s_attr: Optional[AttrMatrix],
    s_attr_value: Optional[AttrMatrix],
    weights: SimilarityWeights = SimilarityWeights(),
    candidates: Optional[CandidateSets] = None,
    fine_grained: bool = False,
    use_global_filter: bool = True,
) -> AlignmentResult:
    """Combine similarities, align locally and globally, and filter.

    Positives are local positives confirmed by the global matching; negatives
    are local negatives the global matching does not contain. Without the
    global filter the local sets are returned unchanged.
    """
    sim = as_similarity(s_rel)
    if candidates is not None and (tuple(sim.row_ids) != candidates.left or tuple(sim.col_ids) != candidates.right):
        raise ValueError("S_rel is not aligned to the candidate sets")
    combined = as_similarity(combine_similarity(sim, s_attr, s_attr_value, weights))
    if fine_grained:
        combined = fine_grained_similarity(combined)

    event_bus.emit(RunEvent.STAGE_ENTERED, Stage.ABGS)
    event_bus.emit(RunEvent.STAGE_ENTERED, Stage.LOCAL_ALIGN)
    local_plus, local_minus = local_align(combined)
    if use_global_filter:
        event_bus.emit(RunEvent.STAGE_ENTERED, Stage.GLOBAL_ALIGN)
        p_global = global_align(combined)
        iter_plus = local_plus & p_global
        iter_minus = local_minus - p_global
    else:
        event_bus.emit(RunEvent.STAGE_SKIPPED, Stage.GLOBAL_ALIGN)
        p_global = set()
        iter_plus, iter_minus = set(local_plus), set(local_minus)

    logger.debug(
        f"ABGS: local +{len(local_plus)}/-{len(local_minus)}, global {len(p_global)}, "
        f"iter +{len(iter_plus)}/-{len(iter_minus)}"
    )
    return AlignmentResult(
        p_local_plus=frozenset(local_plus),
        p_local_minus=frozenset(local_minus),
        p_global=frozenset(p_global),
        p_iter_plus=frozenset(iter_plus),
        p_iter_minus=frozenset(iter_minus),
    )
