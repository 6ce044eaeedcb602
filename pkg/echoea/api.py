"""Programmatic API facade for EchoEA, one method per CLI subcommand.

Usage:
    from core import bootstrap
    from api import EchoEAAPI

    api = EchoEAAPI(await bootstrap())
    settings = api.load_settings(None, {"variant": "b", "max_epochs": 20})
    results = await api.train(settings)
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import pandas as pd

from core import ServiceContainer
from models.entities import EvalReport
from services.experiment import ExperimentResult
from services.settings_service import ExperimentSettings

logger = logging.getLogger(__name__)

_RATE_PAIRS = (("r_p", "local_r_p"), ("r_n", "local_r_n"))


class EchoEAAPI:
    """High-level facade over the experiment services."""

    def __init__(self, services: ServiceContainer) -> None:
        self._svc = services

    def load_settings(
        self,
        config_path: Optional[Path] = None,
        overrides: Optional[Mapping[str, Any]] = None,
    ) -> ExperimentSettings:
        return self._svc.settings.load(config_path, overrides)

    async def train(self, settings: ExperimentSettings) -> List[ExperimentResult]:
        """Train (``settings.runs`` times) and write all run artifacts."""
        return await self._svc.experiment.run_repeated(settings)

    async def evaluate(self, settings: ExperimentSettings) -> List[EvalReport]:
        """Re-evaluate the saved final embeddings of ``settings.run_name``."""
        return await self._svc.experiment.evaluate_saved(settings)

    async def bootstrap_stats(self, settings: ExperimentSettings) -> Tuple[pd.DataFrame, Dict[str, Optional[float]]]:
        """Per-round bootstrap quality and summed error rates (filtered vs local-only)."""
        rounds = await self._svc.experiment.bootstrap_stats(settings)
        totals: Dict[str, Optional[float]] = {}
        for filtered, local in _RATE_PAIRS:
            for column in (filtered, local):
                total = rounds[column].sum(min_count=1) if not rounds.empty else None
                totals[column] = None if total is None or pd.isna(total) else float(total)
        logger.info(f"{len(rounds)} bootstrap rounds recorded for '{settings.run_name}'")
        return rounds, totals

    def synth(self, settings: ExperimentSettings, directory: Path) -> Path:
        return self._svc.experiment.synth(settings, directory)

    async def align(self, settings: ExperimentSettings) -> Path:
        return await self._svc.experiment.align(settings)
