"""Experiment settings: flat ``key=value`` files validated against a typed schema.

Every key of :class:`ExperimentSettings` may appear in the file or as a CLI
override. Problems are collected and raised together so one run of the CLI
reports every bad key.
"""
import logging
import typing
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

from dotenv import dotenv_values

from config import (
    DEFAULT_ACTIVATION,
    DEFAULT_ALPHA_ATTR,
    DEFAULT_ALPHA_REL,
    DEFAULT_ALPHA_VALUE,
    DEFAULT_ATTR_MATCH_THRESHOLD,
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
    DEFAULT_RUNS,
    DEFAULT_TRAIN_FRACTION,
    OUTPUT_DIR,
    VARIANT_FLAGS,
    Activation,
    AlignMode,
    EvalDirection,
    Variant,
)
from models.entities import EncoderConfig, SimilarityWeights, TrainingConfig

logger = logging.getLogger(__name__)

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigValidationError(Exception):
    """One or more configuration keys are unknown, unparsable or out of range."""

    def __init__(self, problems: List[Tuple[str, str]]):
        self.problems = problems
        self.keys = [key for key, _ in problems]
        details = "; ".join(f"{key}: {reason}" for key, reason in problems)
        super().__init__(f"Invalid configuration ({details})")


def _check(predicate: Callable[[Any], bool], hint: str) -> Dict[str, Any]:
    return {"check": predicate, "hint": hint}


def _positive(v) -> bool:
    return v > 0


def _non_negative(v) -> bool:
    return v >= 0


def _unit(v) -> bool:
    return 0.0 <= v <= 1.0


@dataclass
class ExperimentSettings:
    # Data
    data_dir: Optional[Path] = None
    output_dir: Path = OUTPUT_DIR
    run_name: str = "run"
    variant: Variant = Variant.FULL
    train_fraction: float = field(default=DEFAULT_TRAIN_FRACTION,
                                  metadata=_check(lambda v: 0.0 < v < 1.0, "must be in (0, 1)"))
    normalizer: Optional[Path] = None

    # Synthetic data (used when data_dir is unset)
    synth_entities: int = field(default=200, metadata=_check(lambda v: v >= 2, "must be >= 2"))
    synth_relations: int = field(default=10, metadata=_check(_positive, "must be > 0"))
    synth_density: float = field(default=3.0, metadata=_check(_positive, "must be > 0"))
    synth_attr_vocab: int = field(default=8, metadata=_check(_positive, "must be > 0"))
    synth_noise: float = field(default=0.1, metadata=_check(_unit, "must be in [0, 1]"))

    # Encoder
    d_e: int = field(default=DEFAULT_ENTITY_DIM, metadata=_check(_positive, "must be > 0"))
    d_r: int = field(default=0, metadata=_check(_non_negative, "must be >= 0"))
    dropout: float = field(default=DEFAULT_DROPOUT, metadata=_check(lambda v: 0.0 <= v < 1.0, "must be in [0, 1)"))
    pan_gcn_layers: int = field(default=DEFAULT_PAN_GCN_LAYERS, metadata=_check(_non_negative, "must be >= 0"))
    pan_gat_layers: int = field(default=DEFAULT_PAN_GAT_LAYERS, metadata=_check(_non_negative, "must be >= 0"))
    activation: Activation = DEFAULT_ACTIVATION

    # Training
    learning_rate: float = field(default=DEFAULT_LEARNING_RATE, metadata=_check(_positive, "must be > 0"))
    margin: float = field(default=DEFAULT_MARGIN, metadata=_check(_positive, "must be > 0"))
    neg_per_pos: int = field(default=DEFAULT_NEG_PER_POS, metadata=_check(lambda v: v >= 1, "must be >= 1"))
    refresh_period: int = field(default=DEFAULT_REFRESH_PERIOD, metadata=_check(lambda v: v >= 1, "must be >= 1"))
    max_epochs: int = field(default=DEFAULT_MAX_EPOCHS, metadata=_check(_non_negative, "must be >= 0"))
    rng_seed: int = DEFAULT_RNG_SEED
    runs: int = field(default=DEFAULT_RUNS, metadata=_check(lambda v: v >= 1, "must be >= 1"))
    # Which run_<i> of a repeated run the saved-run commands open
    run_index: Optional[int] = field(default=None, metadata=_check(_non_negative, "must be >= 0"))
    freeze_embeddings: bool = False
    fine_grained: bool = False
    eval_every: int = field(default=0, metadata=_check(_non_negative, "must be >= 0"))
    checkpoint_every: int = field(default=0, metadata=_check(_non_negative, "must be >= 0"))

    # Similarity
    alpha_rel: float = field(default=DEFAULT_ALPHA_REL, metadata=_check(_unit, "must be in [0, 1]"))
    alpha_attr: float = field(default=DEFAULT_ALPHA_ATTR, metadata=_check(_unit, "must be in [0, 1]"))
    alpha_value: float = field(default=DEFAULT_ALPHA_VALUE, metadata=_check(_unit, "must be in [0, 1]"))
    attr_match_threshold: float = field(default=DEFAULT_ATTR_MATCH_THRESHOLD,
                                        metadata=_check(_unit, "must be in [0, 1]"))

    # Reporting
    direction: EvalDirection = EvalDirection.LEFT_TO_RIGHT
    plots: bool = True

    @property
    def is_synthetic(self) -> bool:
        return self.data_dir is None

    @property
    def use_abgs(self) -> bool:
        return VARIANT_FLAGS[self.variant][3]

    @property
    def align_mode(self) -> AlignMode:
        return VARIANT_FLAGS[self.variant][4]

    def encoder_config(self) -> EncoderConfig:
        use_pan, use_en, use_can, _, _ = VARIANT_FLAGS[self.variant]
        return EncoderConfig(
            d_e=self.d_e,
            d_r=self.d_r,
            dropout_rate=self.dropout,
            pan_gcn_layers=self.pan_gcn_layers,
            pan_gat_layers=self.pan_gat_layers,
            activation=self.activation,
            use_pan=use_pan,
            use_en=use_en,
            use_can=use_can,
        )

    def training_config(self, run_index: int = 0) -> TrainingConfig:
        return TrainingConfig(
            learning_rate=self.learning_rate,
            margin=self.margin,
            neg_per_pos=self.neg_per_pos,
            refresh_period=self.refresh_period,
            max_epochs=self.max_epochs,
            rng_seed=self.rng_seed + run_index,
            freeze_embeddings=self.freeze_embeddings,
            use_abgs=self.use_abgs,
            use_global_filter=True,
            fine_grained=self.fine_grained,
            eval_every=self.eval_every,
            checkpoint_every=self.checkpoint_every,
        )

    def weights(self) -> SimilarityWeights:
        return SimilarityWeights(rel=self.alpha_rel, attr=self.alpha_attr, value=self.alpha_value)

    def to_dict(self) -> Dict[str, Any]:
        """Flat, JSON-safe view (enums by value, paths as strings)."""
        out: Dict[str, Any] = {}
        for key, value in asdict(self).items():
            if isinstance(value, Enum):
                value = value.value
            elif isinstance(value, Path):
                value = str(value)
            out[key] = value
        return out


def _base_type(tp: Any) -> Tuple[Any, bool]:
    """(underlying type, optional?) of a field annotation."""
    if typing.get_origin(tp) is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        return args[0], True
    return tp, False


def _coerce(raw: Any, tp: Any) -> Any:
    base, optional = _base_type(tp)
    if isinstance(raw, base) and not (base is int and isinstance(raw, bool)):
        return raw
    text = "" if raw is None else str(raw).strip()
    if optional and text == "":
        return None
    if base is bool:
        lowered = text.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got '{text}'")
    if isinstance(base, type) and issubclass(base, Enum):
        choices = [m.value for m in base]
        try:
            return base(text)
        except ValueError:
            raise ValueError(f"expected one of {choices}, got '{text}'") from None
    if base is int:
        return int(text)
    if base is float:
        return float(text)
    if base is Path:
        return Path(text)
    return text


class SettingsService:
    """Parses and validates experiment settings.

    Values come from an optional flat config file and are overridden by
    explicit CLI values (``None`` overrides are ignored).
    """

    def __init__(self) -> None:
        self._fields = {f.name: f for f in fields(ExperimentSettings)}

    @property
    def keys(self) -> List[str]:
        return list(self._fields)

    def parse(self, raw: Mapping[str, Any]) -> ExperimentSettings:
        problems: List[Tuple[str, str]] = []
        values: Dict[str, Any] = {}
        for key, text in raw.items():
            f = self._fields.get(key)
            if f is None:
                problems.append((key, "unknown key"))
                continue
            try:
                value = _coerce(text, f.type)
            except ValueError as e:
                problems.append((key, str(e)))
                continue
            check = f.metadata.get("check")
            if check is not None and value is not None and not check(value):
                problems.append((key, f"{f.metadata['hint']}, got {value}"))
                continue
            values[key] = value
        if problems:
            logger.error(f"Rejected configuration keys: {', '.join(k for k, _ in problems)}")
            raise ConfigValidationError(problems)
        return ExperimentSettings(**values)

    def load(self, path: Optional[Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> ExperimentSettings:
        """Read ``path`` (if given), apply overrides and validate."""
        raw: Dict[str, Any] = {}
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise FileNotFoundError(f"Config file not found: {path}")
            raw.update(dotenv_values(path))
            logger.info(f"Loaded {len(raw)} settings from {path}")
        for key, value in (overrides or {}).items():
            if value is not None:
                raw[key] = value
        return self.parse(raw)
