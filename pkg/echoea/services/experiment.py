"""End-to-end experiment runs: data, training, evaluation, artifacts.

A run directory holds the CSV artifacts (the contract), best-effort PNG plots
and the checkpoint store. Repeated runs go to ``run_<i>`` subdirectories with
an ``eval_summary.csv`` of per-metric means next to them.
"""
import logging
from contextlib import ExitStack
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
import torch

from config import (
    ALIGNMENT_CSV,
    ATTR_REPORT_CSV,
    BOOTSTRAP_CSV,
    BOOTSTRAP_PLOT,
    CHECKPOINT_DB,
    CSV_FLOAT_FORMAT,
    EVAL_CSV,
    EVAL_SUMMARY_CSV,
    FINAL_EMBEDDING_GROUPS,
    HISTORY_CSV,
    HISTORY_PLOT,
    STAGE_TRACE_CSV,
    AlignMode,
    Stage,
)
from database import CheckpointNotFoundError, configure_db_path, db
from events import RunEvent, event_bus
from models.entities import (
    AttributeAlignment,
    BootstrapRoundRecord,
    CandidateSets,
    EncoderConfig,
    EpochRecord,
    EvalReport,
    KnowledgeGraph,
    SeedPairs,
    SimilarityMatrix,
)
from services.alignment import fine_grained_similarity, global_align, rel_similarity
from services.attribute_sim import (
    align_attributes,
    attr_similarity_sparse,
    attr_value_similarity_sparse,
    combine_similarity,
    load_normalizer,
    to_similarity,
    write_alignment_report,
)
from services.encoder import glorot
from services.evaluation import evaluate, global_hits
from services.kg_loader import load_dataset, load_side_embeddings, save_dataset
from services.seeds import default_candidates, split_seeds
from services.settings_service import ConfigValidationError, ExperimentSettings
from services.synthetic import synth_kg_pair
from services.training import Trainer

logger = logging.getLogger(__name__)

_HISTORY_COLUMNS = ["epoch", "loss", "p_plus", "p_iter_plus", "p_iter_minus", "hits_1", "hits_10", "mrr"]
_EVAL_COLUMNS = ["source", "alignment", "direction", "hits_1", "hits_10", "mrr"]
_ROUND_COLUMNS = [
    "round", "epoch", "p_iter_plus", "p_iter_minus", "p_global",
    "r_u", "r_p", "r_n", "local_r_u", "local_r_p", "local_r_n",
]


@dataclass
class PreparedData:
    """Everything a run needs before training starts."""
    kg1: KnowledgeGraph
    kg2: KnowledgeGraph
    seeds: SeedPairs
    train: SeedPairs
    test: SeedPairs
    candidates: CandidateSets
    x0s: Tuple[np.ndarray, np.ndarray]
    attributes: AttributeAlignment
    s_attr: sp.csr_matrix
    s_value: sp.csr_matrix


@dataclass
class ExperimentResult:
    run_name: str
    output_dir: Path
    align_mode: AlignMode
    reports: List[EvalReport] = field(default_factory=list)
    history: List[EpochRecord] = field(default_factory=list)
    rounds: List[BootstrapRoundRecord] = field(default_factory=list)
    stage_trace: List[Dict[str, str]] = field(default_factory=list)
    artifacts: Dict[str, Path] = field(default_factory=dict)

    def report(self, source: str = "model", alignment: Optional[str] = None) -> EvalReport:
        wanted = alignment or self.align_mode.value
        for r in self.reports:
            if r.label == source and r.alignment == wanted:
                return r
        raise KeyError(f"No {source}/{wanted} report")

    @property
    def headline(self) -> EvalReport:
        """The trained model under the variant's own alignment mode."""
        return self.report("model")


class StageTrace:
    """Records the first (stage, status) occurrences seen on the event bus."""

    def __init__(self) -> None:
        self._rows: List[Dict[str, str]] = []
        self._seen = set()
        self._stack = ExitStack()

    def __enter__(self) -> "StageTrace":
        self._stack.enter_context(event_bus.subscribed(RunEvent.STAGE_ENTERED, lambda s: self._record(s, "entered")))
        self._stack.enter_context(event_bus.subscribed(RunEvent.STAGE_SKIPPED, lambda s: self._record(s, "skipped")))
        return self

    def __exit__(self, *exc) -> None:
        self._stack.close()

    def _record(self, stage: Stage, status: str) -> None:
        key = (stage.value, status)
        if key in self._seen:
            return
        self._seen.add(key)
        self._rows.append({"stage": stage.value, "status": status})
        logger.debug(f"Stage {stage.value}: {status}")

    @property
    def rows(self) -> List[Dict[str, str]]:
        return list(self._rows)

    def status(self, stage: Stage) -> set:
        return {r["status"] for r in self._rows if r["stage"] == stage.value}


# ============================================================================
# Artifact writers
# ============================================================================

def _write_csv(rows: Sequence[Dict[str, Any]], columns: List[str], path: Path) -> Path:
    pd.DataFrame(list(rows), columns=columns).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    event_bus.emit(RunEvent.ARTIFACT_WRITTEN, path)
    return path


def _plot_history(history: Sequence[EpochRecord], rounds: Sequence[BootstrapRoundRecord], out: Path) -> List[Path]:
    """Loss and bootstrap-quality curves; failures only warn."""
    written: List[Path] = []
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        if history:
            fig, ax = plt.subplots(figsize=(6, 3.5), constrained_layout=True)
            ax.plot([r.epoch for r in history], [r.loss for r in history], label="loss")
            ax.set_xlabel("epoch")
            ax.set_ylabel("hinge loss")
            fig.savefig(out / HISTORY_PLOT, dpi=120)
            plt.close(fig)
            written.append(out / HISTORY_PLOT)

        scored = [r for r in rounds if r.quality is not None]
        if scored:
            fig, ax = plt.subplots(figsize=(6, 3.5), constrained_layout=True)
            xs = [r.round for r in scored]
            for attr, label in (("r_p", "false positives"), ("r_n", "false negatives")):
                ax.plot(xs, [getattr(r.quality, attr) or 0.0 for r in scored], label=f"{label} (global filter)")
                ax.plot(xs, [getattr(r.local_quality, attr) or 0.0 for r in scored], "--", label=f"{label} (local)")
            ax.set_xlabel("bootstrap round")
            ax.set_ylabel("rate")
            ax.legend()
            fig.savefig(out / BOOTSTRAP_PLOT, dpi=120)
            plt.close(fig)
            written.append(out / BOOTSTRAP_PLOT)
    except (ImportError, OSError, ValueError, RuntimeError) as e:
        logger.warning(f"Skipping plots: {e}")
    return written


def _param_arrays(groups: Dict[str, torch.Tensor]) -> Dict[str, np.ndarray]:
    return {name: t.detach().cpu().numpy() for name, t in groups.items()}


# ============================================================================
# Service
# ============================================================================

class ExperimentService:
    """Runs experiments and the follow-up commands on saved runs."""

    def run_dir(self, settings: ExperimentSettings) -> Path:
        return Path(settings.output_dir) / settings.run_name

    def saved_run_dir(self, settings: ExperimentSettings) -> Path:
        """Directory of a finished run; ``run_index`` picks one run of a repeated run."""
        base = self.run_dir(settings)
        if settings.run_index is not None:
            return base / f"run_{settings.run_index}"
        if not (base / CHECKPOINT_DB).exists():
            repeated = sorted(p.name for p in base.glob("run_*") if (p / CHECKPOINT_DB).is_file())
            if repeated:
                raise ConfigValidationError(
                    [("run_index", f"'{settings.run_name}' is a repeated run, set it to open one of {repeated}")]
                )
        return base

    async def _open_store(self, directory: Path) -> None:
        await db.close()
        configure_db_path(directory / CHECKPOINT_DB)
        await db.init_db()

    async def _open_saved_store(self, settings: ExperimentSettings) -> Path:
        directory = self.saved_run_dir(settings)
        if not (directory / CHECKPOINT_DB).is_file():
            raise CheckpointNotFoundError(settings.run_name)
        await self._open_store(directory)
        return directory

    # ------------------------------------------------------------------------
    # Data
    # ------------------------------------------------------------------------

    def prepare(self, settings: ExperimentSettings, run_index: int = 0) -> PreparedData:
        """Load or generate the KGs, split seeds and build the (sparse) attribute similarities."""
        if settings.is_synthetic:
            kg1, kg2, seeds, x0s = synth_kg_pair(
                settings.synth_entities,
                settings.synth_relations,
                settings.synth_density,
                settings.synth_attr_vocab,
                settings.synth_noise,
                rng_seed=settings.rng_seed,
                dim=settings.d_e,
            )
        else:
            kg1, kg2, seeds = load_dataset(settings.data_dir)
            x0s = load_side_embeddings(settings.data_dir, kg1, kg2)
            if x0s is None:
                logger.warning(f"No embedding files in {settings.data_dir}; using random initial embeddings")
                g = torch.Generator().manual_seed(settings.rng_seed)
                x0s = tuple(glorot((kg.n_entities, settings.d_e), g).numpy() for kg in (kg1, kg2))
            elif x0s[0].shape[1] != settings.d_e or x0s[1].shape[1] != settings.d_e:
                raise ConfigValidationError(
                    [("d_e", f"embedding files have dimension {x0s[0].shape[1]}, d_e is {settings.d_e}")]
                )
        event_bus.emit(RunEvent.DATASET_LOADED, (kg1, kg2))

        train, test = split_seeds(seeds, settings.train_fraction, settings.rng_seed + run_index)
        candidates = default_candidates(test)
        event_bus.emit(RunEvent.SEEDS_SPLIT, (train, test))
        logger.info(f"Seeds: {len(train)} train, {len(test)} test")

        normalizer = load_normalizer(settings.normalizer) if settings.normalizer else None
        attributes = align_attributes(kg1, kg2, settings.attr_match_threshold, normalizer)
        s_attr = attr_similarity_sparse(kg1, kg2, attributes, candidates)
        s_value = attr_value_similarity_sparse(kg1, kg2, attributes, candidates)
        return PreparedData(kg1, kg2, seeds, train, test, candidates, x0s, attributes, s_attr, s_value)

    # ------------------------------------------------------------------------
    # Evaluation
    # ------------------------------------------------------------------------

    def model_similarity(
        self,
        settings: ExperimentSettings,
        data: PreparedData,
        e1: torch.Tensor,
        e2: torch.Tensor,
    ) -> SimilarityMatrix:
        """S_rel, combined with the attribute similarities for bootstrapped variants.

        With ``fine_grained`` set the result is refined as in bootstrapping.
        """
        s = rel_similarity(e1, e2, data.candidates)
        if settings.use_abgs:
            s = combine_similarity(s, data.s_attr, data.s_value, settings.weights())
        return fine_grained_similarity(s) if settings.fine_grained else s

    def baseline_reports(self, settings: ExperimentSettings, data: PreparedData) -> List[EvalReport]:
        truth = data.test.pairs
        x1, x2 = (torch.as_tensor(x) for x in data.x0s)
        return [
            evaluate(rel_similarity(x1, x2, data.candidates), truth, settings.direction, label="init_emb"),
            evaluate(to_similarity(data.s_attr, data.candidates), truth, settings.direction, label="attr_sim"),
            evaluate(to_similarity(data.s_value, data.candidates), truth, settings.direction, label="value_sim"),
        ]

    def model_reports(
        self,
        settings: ExperimentSettings,
        data: PreparedData,
        e1: torch.Tensor,
        e2: torch.Tensor,
    ) -> List[EvalReport]:
        s = self.model_similarity(settings, data, e1, e2)
        truth = data.test.pairs
        return [
            evaluate(s, truth, settings.direction, label="model"),
            global_hits(s, truth, settings.direction, label="model"),
        ]

    # ------------------------------------------------------------------------
    # Runs
    # ------------------------------------------------------------------------

    async def run_experiment(
        self,
        settings: ExperimentSettings,
        run_index: int = 0,
        output_dir: Optional[Path] = None,
    ) -> ExperimentResult:
        """Train one variant and write its artifacts and checkpoints."""
        out = Path(output_dir) if output_dir is not None else self.run_dir(settings)
        out.mkdir(parents=True, exist_ok=True)
        logger.info(f"Run '{settings.run_name}' ({settings.variant.value}) -> {out}")

        result = ExperimentResult(run_name=settings.run_name, output_dir=out, align_mode=settings.align_mode)
        with StageTrace() as trace:
            data = self.prepare(settings, run_index)
            write_alignment_report(
                data.attributes, data.kg1.attribute_names, data.kg2.attribute_names, out / ATTR_REPORT_CSV
            )
            result.artifacts["attribute_alignment"] = out / ATTR_REPORT_CSV
            result.reports.extend(self.baseline_reports(settings, data))

            await self._open_store(out)
            await db.save_run(settings.run_name, settings.variant.value, settings.to_dict())

            encoder_config = settings.encoder_config()
            training_config = settings.training_config(run_index)
            attr_matrices = (data.s_attr, data.s_value) if settings.use_abgs else (None, None)
            trainer = Trainer(
                data.kg1, data.kg2, data.train, data.candidates, data.x0s,
                encoder_config, training_config,
                attr_matrices=attr_matrices,
                weights=settings.weights(),
                truth=data.test,
                evaluator=lambda e1, e2: evaluate(
                    self.model_similarity(settings, data, e1, e2), data.test.pairs, settings.direction
                ),
            )

            every = training_config.checkpoint_every
            for record in trainer.epochs():
                if every and record.epoch % every == 0:
                    await db.save_checkpoint(
                        settings.run_name, record.epoch, encoder_config.to_dict(),
                        _param_arrays(trainer.params.groups()),
                    )
                    event_bus.emit(RunEvent.CHECKPOINT_SAVED, record.epoch)

            trained = trainer.result()
            e1, e2 = trained.embeddings
            groups = _param_arrays(trained.params.groups())
            groups[FINAL_EMBEDDING_GROUPS[0]] = e1.numpy()
            groups[FINAL_EMBEDDING_GROUPS[1]] = e2.numpy()
            final_epoch = len(trained.history)
            await db.save_checkpoint(settings.run_name, final_epoch, encoder_config.to_dict(), groups)
            event_bus.emit(RunEvent.CHECKPOINT_SAVED, final_epoch)

            final, other = (
                (Stage.GLOBAL_ALIGN, Stage.LOCAL_ALIGN)
                if settings.align_mode is AlignMode.GLOBAL
                else (Stage.LOCAL_ALIGN, Stage.GLOBAL_ALIGN)
            )
            event_bus.emit(RunEvent.STAGE_ENTERED, final)
            event_bus.emit(RunEvent.STAGE_SKIPPED, other)
            model_reports = self.model_reports(settings, data, e1, e2)
            result.reports.extend(model_reports)
            for report in result.reports:
                event_bus.emit(RunEvent.EVALUATED, report)

        result.history = trained.history
        result.rounds = trained.rounds
        result.stage_trace = trace.rows
        await db.save_history(settings.run_name, result.history)
        await db.save_bootstrap_rounds(settings.run_name, result.rounds)

        result.artifacts["history"] = _write_csv([r.to_row() for r in result.history], _HISTORY_COLUMNS,
                                                 out / HISTORY_CSV)
        result.artifacts["eval"] = _write_csv([r.to_row() for r in result.reports], _EVAL_COLUMNS, out / EVAL_CSV)
        result.artifacts["bootstrap_rounds"] = _write_csv([r.to_row() for r in result.rounds], _ROUND_COLUMNS,
                                                          out / BOOTSTRAP_CSV)
        result.artifacts["stage_trace"] = _write_csv(result.stage_trace, ["stage", "status"], out / STAGE_TRACE_CSV)
        if settings.plots:
            for path in _plot_history(result.history, result.rounds, out):
                result.artifacts[path.stem] = path

        headline = result.headline
        logger.info(
            f"Run '{settings.run_name}' done: {headline.alignment} Hits@1={headline.hits[1]:.4f}"
            + (f", MRR={headline.mrr:.4f}" if headline.mrr is not None else "")
        )
        return result

    async def run_repeated(self, settings: ExperimentSettings, runs: Optional[int] = None) -> List[ExperimentResult]:
        """Independent runs with seeds rng_seed + i; writes eval_summary.csv of means."""
        runs = runs if runs is not None else settings.runs
        if runs < 1:
            raise ValueError(f"runs must be >= 1, got {runs}")
        if runs == 1:
            return [await self.run_experiment(settings)]
        base = self.run_dir(settings)
        results = [
            await self.run_experiment(settings, run_index=i, output_dir=base / f"run_{i}") for i in range(runs)
        ]
        frame = pd.DataFrame([r.to_row() for res in results for r in res.reports], columns=_EVAL_COLUMNS)
        summary = (
            frame.groupby(["source", "alignment", "direction"], sort=True)[["hits_1", "hits_10", "mrr"]]
            .mean()
            .reset_index()
        )
        summary.insert(3, "runs", runs)
        base.mkdir(parents=True, exist_ok=True)
        summary.to_csv(base / EVAL_SUMMARY_CSV, index=False, float_format=CSV_FLOAT_FORMAT)
        event_bus.emit(RunEvent.ARTIFACT_WRITTEN, base / EVAL_SUMMARY_CSV)
        logger.info(f"Averaged {runs} runs into {base / EVAL_SUMMARY_CSV}")
        return results

    # ------------------------------------------------------------------------
    # Saved runs
    # ------------------------------------------------------------------------

    async def load_final_embeddings(self, settings: ExperimentSettings) -> Tuple[torch.Tensor, torch.Tensor]:
        await self._open_saved_store(settings)
        checkpoint = await db.load_checkpoint(settings.run_name)
        missing = [g for g in FINAL_EMBEDDING_GROUPS if g not in checkpoint.groups]
        if missing:
            raise ValueError(f"Checkpoint {settings.run_name}@{checkpoint.epoch} has no final embeddings")
        saved = EncoderConfig.from_dict(checkpoint.encoder_config)
        logger.info(f"Loaded final embeddings of '{settings.run_name}' (epoch {checkpoint.epoch}, d_e={saved.d_e})")
        return tuple(torch.as_tensor(checkpoint.groups[g]) for g in FINAL_EMBEDDING_GROUPS)

    async def evaluate_saved(self, settings: ExperimentSettings) -> List[EvalReport]:
        """Re-evaluate the final embeddings of a finished run; rewrites eval.csv."""
        e1, e2 = await self.load_final_embeddings(settings)
        data = self.prepare(settings, settings.run_index or 0)
        reports = self.baseline_reports(settings, data) + self.model_reports(settings, data, e1, e2)
        _write_csv([r.to_row() for r in reports], _EVAL_COLUMNS, self.saved_run_dir(settings) / EVAL_CSV)
        return reports

    async def bootstrap_stats(self, settings: ExperimentSettings) -> pd.DataFrame:
        """Bootstrap rounds of a finished run, with filtered vs local-only totals."""
        await self._open_saved_store(settings)
        rows = await db.load_bootstrap_rounds(settings.run_name)
        return pd.DataFrame(rows, columns=_ROUND_COLUMNS)

    async def align(self, settings: ExperimentSettings) -> Path:
        """Write the predicted pairs of a finished run (entity URIs and score)."""
        e1, e2 = await self.load_final_embeddings(settings)
        data = self.prepare(settings, settings.run_index or 0)
        s = self.model_similarity(settings, data, e1, e2)
        if settings.align_mode is AlignMode.GLOBAL:
            pairs = global_align(s)
        else:
            best = np.argmax(s.values, axis=1)
            pairs = {s.pair(i, int(j)) for i, j in enumerate(best)}
        rows, cols = s.row_index(), s.col_index()
        records = [
            {
                "kg1_entity": data.kg1.entity_uris[a],
                "kg2_entity": data.kg2.entity_uris[b],
                "score": float(s.values[rows[a], cols[b]]),
            }
            for a, b in sorted(pairs)
        ]
        return _write_csv(records, ["kg1_entity", "kg2_entity", "score"], self.saved_run_dir(settings) / ALIGNMENT_CSV)

    def synth(self, settings: ExperimentSettings, directory: Path) -> Path:
        """Write a synthetic KG pair as a dataset directory."""
        kg1, kg2, truth, x0s = synth_kg_pair(
            settings.synth_entities,
            settings.synth_relations,
            settings.synth_density,
            settings.synth_attr_vocab,
            settings.synth_noise,
            rng_seed=settings.rng_seed,
            dim=settings.d_e,
        )
        save_dataset(kg1, kg2, truth, directory, embeddings=x0s)
        return Path(directory)


async def run_experiment(settings: ExperimentSettings) -> ExperimentResult:
    return await ExperimentService().run_experiment(settings)


async def run_repeated(settings: ExperimentSettings, runs: Optional[int] = None) -> List[ExperimentResult]:
    return await ExperimentService().run_repeated(settings, runs)
