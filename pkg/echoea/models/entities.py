from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np
import scipy.sparse as sp

from config import (
    DEFAULT_ACTIVATION,
    DEFAULT_ALPHA_ATTR,
    DEFAULT_ALPHA_REL,
    DEFAULT_ALPHA_VALUE,
    DEFAULT_DROPOUT,
    DEFAULT_ENTITY_DIM,
    DEFAULT_LEARNING_RATE,
    DEFAULT_MARGIN,
    DEFAULT_MAX_EPOCHS,
    DEFAULT_NEG_PER_POS,
    DEFAULT_PAN_GAT_LAYERS,
    DEFAULT_PAN_GCN_LAYERS,
    DEFAULT_REFRESH_PERIOD,
    DEFAULT_RNG_SEED,
    Activation,
    EdgeDirection,
    EvalDirection,
)

Pair = Tuple[int, int]
PairSet = FrozenSet[Pair]


def _as_triples(rows: Any) -> np.ndarray:
    arr = np.asarray(rows, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 3), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"Triples must have shape (n, 3), got {arr.shape}")
    return arr


# ============================================================================
# Knowledge graphs and seeds
# ============================================================================

@dataclass
class KnowledgeGraph:
    """One side of an alignment task with dense, per-side integer ids.

    Entity, relation and attribute ids are positions in the URI side tables.
    Values are interned strings; attribute triples point into ``values``.
    """
    entity_uris: List[str]
    relation_uris: List[str]
    attribute_names: List[str] = field(default_factory=list)
    values: List[str] = field(default_factory=list)
    rel_triples: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    attr_triples: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __post_init__(self) -> None:
        self.rel_triples = _as_triples(self.rel_triples)
        self.attr_triples = _as_triples(self.attr_triples)
        self.rel_triples.setflags(write=False)
        self.attr_triples.setflags(write=False)

    @property
    def n_entities(self) -> int:
        return len(self.entity_uris)

    @property
    def n_relations(self) -> int:
        return len(self.relation_uris)

    @property
    def n_attributes(self) -> int:
        return len(self.attribute_names)

    def integrity_errors(self) -> List[str]:
        """Describe every triple that references an id outside its indexed set."""
        problems = []
        checks = (
            (self.rel_triples, ((0, self.n_entities, "head"), (1, self.n_relations, "relation"),
                                (2, self.n_entities, "tail"))),
            (self.attr_triples, ((0, self.n_entities, "entity"), (1, self.n_attributes, "attribute"),
                                 (2, len(self.values), "value"))),
        )
        for triples, columns in checks:
            for col, bound, label in columns:
                if len(triples) == 0:
                    continue
                bad = np.flatnonzero((triples[:, col] < 0) | (triples[:, col] >= bound))
                if len(bad):
                    problems.append(f"{len(bad)} triple(s) with dangling {label} id, first at row {bad[0]}")
        return problems

    def attribute_sets(self) -> List[Set[int]]:
        sets: List[Set[int]] = [set() for _ in range(self.n_entities)]
        for e, a, _ in self.attr_triples.tolist():
            sets[e].add(a)
        return sets

    def value_sets(self) -> List[Dict[int, Set[str]]]:
        """Per entity: attribute id -> set of value strings."""
        out: List[Dict[int, Set[str]]] = [dict() for _ in range(self.n_entities)]
        for e, a, v in self.attr_triples.tolist():
            out[e].setdefault(a, set()).add(self.values[v])
        return out

    def permuted(self, entity_perm: Sequence[int], relation_perm: Sequence[int]) -> "KnowledgeGraph":
        """Relabel ids: old entity i becomes ``entity_perm[i]``."""
        ent = np.asarray(entity_perm, dtype=np.int64)
        rel = np.asarray(relation_perm, dtype=np.int64)
        entity_uris = [""] * self.n_entities
        for old, new in enumerate(ent.tolist()):
            entity_uris[new] = self.entity_uris[old]
        relation_uris = [""] * self.n_relations
        for old, new in enumerate(rel.tolist()):
            relation_uris[new] = self.relation_uris[old]
        triples = self.rel_triples.copy()
        if len(triples):
            triples[:, 0] = ent[triples[:, 0]]
            triples[:, 1] = rel[triples[:, 1]]
            triples[:, 2] = ent[triples[:, 2]]
        attrs = self.attr_triples.copy()
        if len(attrs):
            attrs[:, 0] = ent[attrs[:, 0]]
        return KnowledgeGraph(
            entity_uris=entity_uris,
            relation_uris=relation_uris,
            attribute_names=list(self.attribute_names),
            values=list(self.values),
            rel_triples=triples,
            attr_triples=attrs,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "entity_uris": list(self.entity_uris),
            "relation_uris": list(self.relation_uris),
            "attribute_names": list(self.attribute_names),
            "values": list(self.values),
            "rel_triples": self.rel_triples.tolist(),
            "attr_triples": self.attr_triples.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "KnowledgeGraph":
        return cls(
            entity_uris=list(d["entity_uris"]),
            relation_uris=list(d["relation_uris"]),
            attribute_names=list(d.get("attribute_names", [])),
            values=list(d.get("values", [])),
            rel_triples=d.get("rel_triples", []),
            attr_triples=d.get("attr_triples", []),
        )


@dataclass(frozen=True)
class SeedPairs:
    """Partial bijection between KG1 and KG2 entity ids, in file order."""
    pairs: Tuple[Pair, ...]

    def __post_init__(self) -> None:
        pairs = tuple((int(a), int(b)) for a, b in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        left = [a for a, _ in pairs]
        right = [b for _, b in pairs]
        if len(set(left)) != len(left) or len(set(right)) != len(right):
            raise ValueError("Seed pairs must be one-to-one on both sides")

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[Pair]:
        return iter(self.pairs)

    def as_set(self) -> PairSet:
        return frozenset(self.pairs)

    def left(self) -> List[int]:
        return [a for a, _ in self.pairs]

    def right(self) -> List[int]:
        return [b for _, b in self.pairs]


@dataclass(frozen=True)
class CandidateSets:
    """Entities still to be aligned on each side (sorted ids)."""
    left: Tuple[int, ...]
    right: Tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "left", tuple(sorted(int(e) for e in self.left)))
        object.__setattr__(self, "right", tuple(sorted(int(e) for e in self.right)))

    def is_empty(self) -> bool:
        return not self.left or not self.right


@dataclass(frozen=True)
class AdjacencyStructure:
    """Self-loop adjacency M + I with degrees and labelled neighbor lists."""
    self_loop_adjacency: sp.csr_matrix
    degree: np.ndarray
    neighbor_lists: List[List[Tuple[int, int, EdgeDirection]]]

    @property
    def size(self) -> int:
        return self.self_loop_adjacency.shape[0]


# ============================================================================
# Similarity matrices
# ============================================================================

@dataclass
class SimilarityMatrix:
    """Dense |E'1| x |E'2| similarity with the entity ids of rows and columns."""
    values: np.ndarray
    row_ids: np.ndarray
    col_ids: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.row_ids = np.asarray(self.row_ids, dtype=np.int64)
        self.col_ids = np.asarray(self.col_ids, dtype=np.int64)
        if self.values.ndim != 2:
            raise ValueError(f"Similarity matrix must be 2-D, got shape {self.values.shape}")
        if self.values.shape != (len(self.row_ids), len(self.col_ids)):
            raise ValueError(
                f"Similarity shape {self.values.shape} does not match "
                f"{len(self.row_ids)} row ids x {len(self.col_ids)} column ids"
            )

    @classmethod
    def from_array(cls, values: Any) -> "SimilarityMatrix":
        arr = np.asarray(values, dtype=np.float64)
        return cls(values=arr, row_ids=np.arange(arr.shape[0]), col_ids=np.arange(arr.shape[1]))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def pair(self, i: int, j: int) -> Pair:
        return int(self.row_ids[i]), int(self.col_ids[j])

    def row_index(self) -> Dict[int, int]:
        return {int(e): i for i, e in enumerate(self.row_ids)}

    def col_index(self) -> Dict[int, int]:
        return {int(e): j for j, e in enumerate(self.col_ids)}

    def with_values(self, values: np.ndarray) -> "SimilarityMatrix":
        return SimilarityMatrix(values=values, row_ids=self.row_ids, col_ids=self.col_ids)

    def transposed(self) -> "SimilarityMatrix":
        return SimilarityMatrix(values=self.values.T, row_ids=self.col_ids, col_ids=self.row_ids)


# ============================================================================
# Configurations
# ============================================================================

@dataclass
class EncoderConfig:
    """Echo encoder shape and ablation switches. ``d_r=0`` means d_e // 3."""
    d_e: int = DEFAULT_ENTITY_DIM
    d_r: int = 0
    dropout_rate: float = DEFAULT_DROPOUT
    pan_gcn_layers: int = DEFAULT_PAN_GCN_LAYERS
    pan_gat_layers: int = DEFAULT_PAN_GAT_LAYERS
    activation: Activation = DEFAULT_ACTIVATION
    use_pan: bool = True
    use_en: bool = True
    use_can: bool = True

    def __post_init__(self) -> None:
        if self.d_r == 0:
            self.d_r = max(1, self.d_e // 3)
        if self.d_e <= 0 or self.d_r <= 0:
            raise ValueError(f"Dimensions must be positive (d_e={self.d_e}, d_r={self.d_r})")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.pan_gcn_layers < 0 or self.pan_gat_layers < 0:
            raise ValueError("Layer counts must be non-negative")
        if isinstance(self.activation, str):
            self.activation = Activation(self.activation)

    @property
    def en_width(self) -> int:
        return self.d_e + 2 * self.d_r if self.use_en else self.d_e

    @property
    def output_width(self) -> int:
        return 2 * self.en_width if self.use_can else self.en_width

    def to_dict(self) -> Dict[str, Any]:
        return {
            "d_e": self.d_e,
            "d_r": self.d_r,
            "dropout_rate": self.dropout_rate,
            "pan_gcn_layers": self.pan_gcn_layers,
            "pan_gat_layers": self.pan_gat_layers,
            "activation": self.activation.value,
            "use_pan": self.use_pan,
            "use_en": self.use_en,
            "use_can": self.use_can,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "EncoderConfig":
        return cls(
            d_e=d["d_e"],
            d_r=d["d_r"],
            dropout_rate=d["dropout_rate"],
            pan_gcn_layers=d["pan_gcn_layers"],
            pan_gat_layers=d["pan_gat_layers"],
            activation=Activation(d["activation"]),
            use_pan=d.get("use_pan", True),
            use_en=d.get("use_en", True),
            use_can=d.get("use_can", True),
        )


@dataclass
class TrainingConfig:
    learning_rate: float = DEFAULT_LEARNING_RATE
    margin: float = DEFAULT_MARGIN
    neg_per_pos: int = DEFAULT_NEG_PER_POS
    refresh_period: int = DEFAULT_REFRESH_PERIOD
    max_epochs: int = DEFAULT_MAX_EPOCHS
    rng_seed: int = DEFAULT_RNG_SEED
    freeze_embeddings: bool = False
    use_abgs: bool = True
    use_global_filter: bool = True
    fine_grained: bool = False
    eval_every: int = 0
    checkpoint_every: int = 0

    def __post_init__(self) -> None:
        if self.margin <= 0:
            raise ValueError(f"margin must be > 0, got {self.margin}")
        if self.neg_per_pos < 1:
            raise ValueError(f"neg_per_pos must be >= 1, got {self.neg_per_pos}")
        if self.refresh_period < 1:
            raise ValueError(f"refresh_period must be >= 1, got {self.refresh_period}")
        if self.max_epochs < 0:
            raise ValueError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.eval_every < 0 or self.checkpoint_every < 0:
            raise ValueError("eval_every and checkpoint_every must be >= 0")


@dataclass(frozen=True)
class SimilarityWeights:
    rel: float = DEFAULT_ALPHA_REL
    attr: float = DEFAULT_ALPHA_ATTR
    value: float = DEFAULT_ALPHA_VALUE

    def __post_init__(self) -> None:
        for name in ("rel", "attr", "value"):
            w = getattr(self, name)
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"Similarity weight {name} must be in [0, 1], got {w}")


@dataclass
class AttributeAlignment:
    """Top-1 mapping from KG1 attribute ids to KG2 attribute ids."""
    matched_pairs: Dict[int, int]
    scores: Dict[int, float]
    dice_threshold: float

    def __len__(self) -> int:
        return len(self.matched_pairs)

    def targets(self) -> Set[int]:
        return set(self.matched_pairs.values())


# ============================================================================
# Samples and alignment results
# ============================================================================

@dataclass(frozen=True)
class NegativeRecord:
    """A positive pair with one of its corrupted counterparts."""
    pos: Pair
    neg: Pair


@dataclass
class SampleBank:
    """Positive, negative and iterative negative pairs used by the loss.

    Train seeds stay in ``p_plus`` forever; iterative negatives never overlap it.
    """
    train_seeds: PairSet
    p_plus: Set[Pair] = field(default_factory=set)
    p_minus: List[NegativeRecord] = field(default_factory=list)
    p_iter_minus: Set[Pair] = field(default_factory=set)

    def __post_init__(self) -> None:
        self.p_plus |= set(self.train_seeds)

    def add_positives(self, pairs: Set[Pair]) -> None:
        self.p_plus |= set(pairs)
        self.p_iter_minus -= self.p_plus

    def replace_iter_negatives(self, pairs: Set[Pair]) -> None:
        self.p_iter_minus = set(pairs) - self.p_plus


@dataclass(frozen=True)
class AlignmentResult:
    p_local_plus: PairSet
    p_local_minus: PairSet
    p_global: PairSet
    p_iter_plus: PairSet
    p_iter_minus: PairSet


# ============================================================================
# Reports
# ============================================================================

@dataclass
class EvalReport:
    """Ranking metrics. For one-to-one (global) alignment only Hits@1 is defined."""
    hits: Dict[int, float]
    mrr: Optional[float]
    direction: EvalDirection = EvalDirection.LEFT_TO_RIGHT
    label: str = "model"
    alignment: str = "local"

    @property
    def one_to_one(self) -> bool:
        return self.mrr is None

    def to_row(self) -> Dict[str, Any]:
        return {
            "source": self.label,
            "alignment": self.alignment,
            "direction": self.direction.value,
            "hits_1": self.hits.get(1),
            "hits_10": self.hits.get(10),
            "mrr": self.mrr,
        }


@dataclass(frozen=True)
class BootstrapQuality:
    r_u: float
    r_p: Optional[float]
    r_n: Optional[float]


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    p_plus: int
    p_iter_plus: int
    p_iter_minus: int
    hits_1: Optional[float] = None
    hits_10: Optional[float] = None
    mrr: Optional[float] = None

    def to_row(self) -> Dict[str, Any]:
        return {
            "epoch": self.epoch,
            "loss": self.loss,
            "p_plus": self.p_plus,
            "p_iter_plus": self.p_iter_plus,
            "p_iter_minus": self.p_iter_minus,
            "hits_1": self.hits_1,
            "hits_10": self.hits_10,
            "mrr": self.mrr,
        }


@dataclass
class BootstrapRoundRecord:
    """One ABGS round, with quality of filtered and local-only generation."""
    round: int
    epoch: int
    p_iter_plus: int
    p_iter_minus: int
    p_global: int
    quality: Optional[BootstrapQuality] = None
    local_quality: Optional[BootstrapQuality] = None

    def to_row(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {
            "round": self.round,
            "epoch": self.epoch,
            "p_iter_plus": self.p_iter_plus,
            "p_iter_minus": self.p_iter_minus,
            "p_global": self.p_global,
        }
        for prefix, q in (("", self.quality), ("local_", self.local_quality)):
            row[f"{prefix}r_u"] = q.r_u if q else None
            row[f"{prefix}r_p"] = q.r_p if q else None
            row[f"{prefix}r_n"] = q.r_n if q else None
        return row


@dataclass
class Checkpoint:
    """Stored parameter groups of one run at one epoch."""
    run: str
    epoch: int
    created_at: str
    encoder_config: Dict[str, Any]
    groups: Dict[str, np.ndarray] = field(default_factory=dict)
