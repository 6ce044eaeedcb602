"""Margin loss, nearest-neighbour negative sampling and the bootstrapped training loop.

Every ``refresh_period`` epochs the loop re-encodes both KGs without dropout,
runs the bootstrapping step (when enabled) to grow the positives and replace
the iterative negatives, then resamples the per-positive negatives.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Set, Tuple

import numpy as np
import torch
import torch.nn as nn

from config import RunMode, Stage
from events import RunEvent, event_bus
from formatters import MetricFormatter
from models.entities import (
    BootstrapRoundRecord,
    CandidateSets,
    EncoderConfig,
    EpochRecord,
    EvalReport,
    KnowledgeGraph,
    NegativeRecord,
    Pair,
    SampleBank,
    SeedPairs,
    SimilarityMatrix,
    SimilarityWeights,
    TrainingConfig,
)
from services.alignment import abgs, l1_distances, rel_similarity
from services.attribute_sim import AttrMatrix
from services.encoder import ModelParams, encode
from services.evaluation import bootstrap_quality
from services.layers import DTYPE, GraphView

logger = logging.getLogger(__name__)


class TrainingError(Exception):
    """Training cannot proceed."""
    pass


class TrainingDivergedError(TrainingError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"Loss became non-finite ({loss}) at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


# ============================================================================
# Loss and negatives
# ============================================================================

def _pair_tensor(pairs: List[Pair]) -> torch.Tensor:
    return torch.as_tensor(pairs, dtype=torch.long).reshape(-1, 2)


def pair_distances(x1: torch.Tensor, x2: torch.Tensor, pairs: torch.Tensor) -> torch.Tensor:
    return (x1[pairs[:, 0]] - x2[pairs[:, 1]]).abs().sum(dim=1)


def hinge_loss(x1: torch.Tensor, x2: torch.Tensor, bank: SampleBank, margin: float) -> torch.Tensor:
    """sum max(0, margin + d(pos) - d(neg)) over negative records
    + sum max(0, margin - d(neg)) over iterative negatives; d is L1."""
    if not bank.p_plus:
        raise TrainingError("No positive pairs to train on")
    loss = torch.zeros((), dtype=x1.dtype)
    if bank.p_minus:
        pos = _pair_tensor([r.pos for r in bank.p_minus])
        neg = _pair_tensor([r.neg for r in bank.p_minus])
        loss = loss + torch.relu(margin + pair_distances(x1, x2, pos) - pair_distances(x1, x2, neg)).sum()
    if bank.p_iter_minus:
        iter_neg = _pair_tensor(sorted(bank.p_iter_minus))
        loss = loss + torch.relu(margin - pair_distances(x1, x2, iter_neg)).sum()
    return loss


def sample_negatives(p_plus: Set[Pair], s: SimilarityMatrix, k: int) -> List[NegativeRecord]:
    """k corruptions per positive from the most similar wrong entities of either side.

    Right-side replacements are ranked by S[e1, :], left-side ones by S[:, e2];
    the two rankings are merged by similarity (ties: right side first, then
    lower index). Known positives are never produced.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rows, cols = s.row_index(), s.col_index()
    values = s.values
    records: List[NegativeRecord] = []
    for e1, e2 in sorted(p_plus):
        if e1 not in rows or e2 not in cols:
            raise ValueError(f"Similarity matrix does not cover positive pair ({e1}, {e2})")
        i, j = rows[e1], cols[e2]
        right_order = [c for c in np.argsort(-values[i], kind="stable").tolist() if c != j]
        left_order = [r for r in np.argsort(-values[:, j], kind="stable").tolist() if r != i]
        a = b = 0
        chosen: List[Pair] = []
        seen: Set[Pair] = set()
        while len(chosen) < k and (a < len(right_order) or b < len(left_order)):
            take_right = b >= len(left_order) or (
                a < len(right_order) and values[i, right_order[a]] >= values[left_order[b], j]
            )
            if take_right:
                candidate = (e1, int(s.col_ids[right_order[a]]))
                a += 1
            else:
                candidate = (int(s.row_ids[left_order[b]]), e2)
                b += 1
            if candidate in p_plus or candidate in seen:
                continue
            seen.add(candidate)
            chosen.append(candidate)
        records.extend(NegativeRecord(pos=(e1, e2), neg=neg) for neg in chosen)
    return records


# ============================================================================
# Training loop
# ============================================================================

Evaluator = Callable[[torch.Tensor, torch.Tensor], EvalReport]


@dataclass
class TrainResult:
    params: ModelParams
    inputs: Tuple[torch.Tensor, torch.Tensor]
    embeddings: Tuple[torch.Tensor, torch.Tensor]
    history: List[EpochRecord] = field(default_factory=list)
    rounds: List[BootstrapRoundRecord] = field(default_factory=list)
    bank: Optional[SampleBank] = None


class Trainer:
    """Stateful training loop; iterate :meth:`epochs` or call :meth:`run`."""

    def __init__(
        self,
        kg1: KnowledgeGraph,
        kg2: KnowledgeGraph,
        train_seeds: SeedPairs,
        candidates: CandidateSets,
        x0s: Tuple[np.ndarray, np.ndarray],
        encoder_config: EncoderConfig,
        training_config: TrainingConfig,
        attr_matrices: Tuple[Optional[AttrMatrix], Optional[AttrMatrix]] = (None, None),
        weights: SimilarityWeights = SimilarityWeights(),
        truth: Optional[SeedPairs] = None,
        evaluator: Optional[Evaluator] = None,
    ):
        if len(train_seeds) == 0:
            raise TrainingError("No train seeds")
        self.encoder_config = encoder_config
        self.config = training_config
        self.candidates = candidates
        self.attr_matrices = attr_matrices
        self.weights = weights
        self.truth = truth.as_set() if truth is not None else None
        self.evaluator = evaluator

        self.graphs = (GraphView.from_kg(kg1), GraphView.from_kg(kg2))
        trainable = not training_config.freeze_embeddings
        self.x = tuple(
            nn.Parameter(torch.as_tensor(np.asarray(x0), dtype=DTYPE).clone(), requires_grad=trainable)
            for x0 in x0s
        )
        self.params = ModelParams(encoder_config, seed=training_config.rng_seed)
        trainable_tensors = list(self.params.parameters()) + (list(self.x) if trainable else [])
        self.optimizer = torch.optim.Adam(trainable_tensors, lr=training_config.learning_rate)
        self.dropout_generator = torch.Generator().manual_seed(training_config.rng_seed + 1)

        self.bank = SampleBank(train_seeds=train_seeds.as_set())
        self.history: List[EpochRecord] = []
        self.rounds: List[BootstrapRoundRecord] = []
        self._last_iter_plus = 0

    def encode_both(self, mode: RunMode) -> Tuple[torch.Tensor, torch.Tensor]:
        return tuple(
            encode(g, x, self.params, self.encoder_config, mode, self.dropout_generator)
            for g, x in zip(self.graphs, self.x)
        )

    def infer(self) -> Tuple[torch.Tensor, torch.Tensor]:
        with torch.no_grad():
            return self.encode_both(RunMode.INFER)

    def _resample(self, e1: torch.Tensor, e2: torch.Tensor) -> None:
        left = sorted({a for a, _ in self.bank.p_plus})
        right = sorted({b for _, b in self.bank.p_plus})
        dist = l1_distances(e1[left], e2[right])
        s = SimilarityMatrix(values=-dist, row_ids=left, col_ids=right)
        self.bank.p_minus = sample_negatives(self.bank.p_plus, s, self.config.neg_per_pos)

    def _bootstrap(self, epoch: int, e1: torch.Tensor, e2: torch.Tensor) -> None:
        s_rel = rel_similarity(e1, e2, self.candidates)
        s_attr, s_value = self.attr_matrices
        result = abgs(
            s_rel, s_attr, s_value, self.weights, self.candidates,
            fine_grained=self.config.fine_grained,
            use_global_filter=self.config.use_global_filter,
        )
        self.bank.add_positives(set(result.p_iter_plus))
        self.bank.replace_iter_negatives(set(result.p_iter_minus))
        self._last_iter_plus = len(result.p_iter_plus)

        record = BootstrapRoundRecord(
            round=len(self.rounds) + 1,
            epoch=epoch,
            p_iter_plus=len(result.p_iter_plus),
            p_iter_minus=len(result.p_iter_minus),
            p_global=len(result.p_global),
        )
        if self.truth:
            record.quality = bootstrap_quality(result.p_iter_plus, result.p_iter_minus, self.truth)
            record.local_quality = bootstrap_quality(result.p_local_plus, result.p_local_minus, self.truth)
        self.rounds.append(record)
        event_bus.emit(RunEvent.BOOTSTRAP_ROUND, record)
        logger.info(
            f"Bootstrap round {record.round} (epoch {epoch}): +{record.p_iter_plus} positives, "
            f"{record.p_iter_minus} iterative negatives, |P+|={len(self.bank.p_plus)}"
        )
        if record.quality is not None:
            logger.info(
                f"Round {record.round} quality: {MetricFormatter.quality_line(record.quality)} "
                f"(local only: {MetricFormatter.quality_line(record.local_quality)})"
            )

    def epochs(self) -> Iterator[EpochRecord]:
        """Run the loop, yielding after every epoch."""
        if self.config.max_epochs == 0:
            return
        self._resample(*self.infer())
        period = self.config.refresh_period
        for epoch in range(1, self.config.max_epochs + 1):
            self.optimizer.zero_grad()
            out1, out2 = self.encode_both(RunMode.TRAIN)
            loss = hinge_loss(out1, out2, self.bank, self.config.margin)
            value = float(loss.detach())
            if not math.isfinite(value):
                logger.error(f"Training diverged at epoch {epoch}: loss={value}")
                raise TrainingDivergedError(epoch, value)
            loss.backward()
            self.optimizer.step()

            e1 = e2 = None
            if epoch % period == 0:
                e1, e2 = self.infer()
                if self.config.use_abgs:
                    self._bootstrap(epoch, e1, e2)
                else:
                    event_bus.emit(RunEvent.STAGE_SKIPPED, Stage.ABGS)
                self._resample(e1, e2)

            record = EpochRecord(
                epoch=epoch,
                loss=value,
                p_plus=len(self.bank.p_plus),
                p_iter_plus=self._last_iter_plus,
                p_iter_minus=len(self.bank.p_iter_minus),
            )
            every = self.config.eval_every
            if self.evaluator is not None and every and epoch % every == 0:
                if e1 is None:
                    e1, e2 = self.infer()
                report = self.evaluator(e1, e2)
                record.hits_1 = report.hits.get(1)
                record.hits_10 = report.hits.get(10)
                record.mrr = report.mrr
            self.history.append(record)
            logger.debug(f"Epoch {epoch}: loss={value:.4f}, |P+|={record.p_plus}")
            event_bus.emit(RunEvent.EPOCH_COMPLETED, record)
            yield record

    def result(self) -> TrainResult:
        return TrainResult(
            params=self.params,
            inputs=tuple(x.detach().clone() for x in self.x),
            embeddings=self.infer(),
            history=list(self.history),
            rounds=list(self.rounds),
            bank=self.bank,
        )

    def run(self) -> TrainResult:
        for _ in self.epochs():
            pass
        return self.result()


def train_loop(
    kg1: KnowledgeGraph,
    kg2: KnowledgeGraph,
    seeds: SeedPairs,
    candidates: CandidateSets,
    x0s: Tuple[np.ndarray, np.ndarray],
    encoder_config: EncoderConfig,
    training_config: TrainingConfig,
    **kwargs,
) -> TrainResult:
    """Train the encoder on ``seeds`` and return params, embeddings and history."""
    return Trainer(kg1, kg2, seeds, candidates, x0s, encoder_config, training_config, **kwargs).run()
