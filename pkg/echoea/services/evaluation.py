import logging
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from config import HITS_AT, EvalDirection
from models.entities import BootstrapQuality, EvalReport, Pair
from services.alignment import MatrixLike, as_similarity, global_align

logger = logging.getLogger(__name__)


def _truth_indices(s: MatrixLike, truth: Iterable[Pair]) -> Tuple[np.ndarray, np.ndarray]:
    sim = as_similarity(s)
    rows, cols = sim.row_index(), sim.col_index()
    pairs = list(truth)
    if not pairs:
        raise ValueError("Ground truth is empty")
    try:
        i = np.array([rows[a] for a, _ in pairs], dtype=np.int64)
        j = np.array([cols[b] for _, b in pairs], dtype=np.int64)
    except KeyError as e:
        raise ValueError(f"Ground-truth entity {e} is not covered by the similarity matrix") from e
    return i, j


def ranks(s: MatrixLike, truth: Iterable[Pair]) -> np.ndarray:
    """1-based rank of each correct target in its source row; ties favour the lower column."""
    values = as_similarity(s).values
    i, j = _truth_indices(s, truth)
    target = values[i, j][:, None]
    rows = values[i]
    higher = (rows > target).sum(axis=1)
    earlier_ties = ((rows == target) & (np.arange(values.shape[1])[None, :] < j[:, None])).sum(axis=1)
    return 1 + higher + earlier_ties


def hits_at_k(s: MatrixLike, truth: Iterable[Pair], k: int) -> float:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return float(np.mean(ranks(s, truth) <= k))


def mrr(s: MatrixLike, truth: Iterable[Pair]) -> float:
    return float(np.mean(1.0 / ranks(s, truth)))


def _one_direction(s: MatrixLike, truth: Sequence[Pair], hits_at: Sequence[int]):
    r = ranks(s, truth)
    return {k: float(np.mean(r <= k)) for k in hits_at}, float(np.mean(1.0 / r))


def evaluate(
    s: MatrixLike,
    truth: Iterable[Pair],
    direction: EvalDirection = EvalDirection.LEFT_TO_RIGHT,
    label: str = "model",
    hits_at: Sequence[int] = HITS_AT,
) -> EvalReport:
    """Hits@k and MRR of a similarity matrix against held-out pairs."""
    sim = as_similarity(s)
    pairs = list(truth)
    if direction is EvalDirection.LEFT_TO_RIGHT:
        hits, m = _one_direction(sim, pairs, hits_at)
    else:
        reverse = [(b, a) for a, b in pairs]
        hits_rl, mrr_rl = _one_direction(sim.transposed(), reverse, hits_at)
        if direction is EvalDirection.RIGHT_TO_LEFT:
            hits, m = hits_rl, mrr_rl
        else:
            hits_lr, mrr_lr = _one_direction(sim, pairs, hits_at)
            hits = {k: (hits_lr[k] + hits_rl[k]) / 2.0 for k in hits_at}
            m = (mrr_lr + mrr_rl) / 2.0
    logger.info(f"[{label}] {direction.value}: " + ", ".join(f"Hits@{k}={v:.4f}" for k, v in hits.items())
                + f", MRR={m:.4f}")
    return EvalReport(hits=hits, mrr=m, direction=direction, label=label, alignment="local")


def global_hits(
    s: MatrixLike,
    truth: Iterable[Pair],
    direction: EvalDirection = EvalDirection.LEFT_TO_RIGHT,
    label: str = "model",
) -> EvalReport:
    """Hits@1 of the one-to-one matching; other metrics are undefined."""
    pairs = list(truth)
    if not pairs:
        raise ValueError("Ground truth is empty")
    _truth_indices(s, pairs)
    matching = global_align(s)
    rate = sum(1 for p in pairs if p in matching) / len(pairs)
    logger.info(f"[{label}] global: Hits@1={rate:.4f}")
    return EvalReport(hits={1: rate}, mrr=None, direction=direction, label=label, alignment="global")


def bootstrap_quality(
    p_iter_plus: Iterable[Pair],
    p_iter_minus: Iterable[Pair],
    truth: Iterable[Pair],
) -> BootstrapQuality:
    """Utilisation, false-positive and false-negative rates of generated samples."""
    truth_set = set(truth)
    if not truth_set:
        raise ValueError("Ground truth is empty")
    plus, minus = set(p_iter_plus), set(p_iter_minus)
    r_u = (len(plus) + len(minus)) / len(truth_set)
    r_p: Optional[float] = len(plus - truth_set) / len(plus) if plus else None
    r_n: Optional[float] = len(minus & truth_set) / len(minus) if minus else None
    return BootstrapQuality(r_u=r_u, r_p=r_p, r_n=r_n)
