"""Headless bootstrap for EchoEA services.

Usage:
    from core import bootstrap, shutdown

    svc = await bootstrap()
    settings = svc.settings.load(Path("full.cfg"), {"max_epochs": 50})
    result = await svc.experiment.run_experiment(settings)
    await shutdown()
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from database import db, configure_db_path
from events import EventBus, event_bus
from services.experiment import ExperimentService
from services.settings_service import SettingsService

logger = logging.getLogger(__name__)


@dataclass
class ServiceContainer:
    """Container holding all initialized services."""
    settings: SettingsService
    experiment: ExperimentService
    events: EventBus


async def bootstrap(db_path: Optional[Path] = None) -> ServiceContainer:
    """Build the service layer.

    Args:
        db_path: Checkpoint store to open right away. Runs normally point the
            store at their own output directory, so this is only needed for
            direct ``db`` access.
    """
    if db_path is not None:
        await db.close()
        configure_db_path(db_path)
        await db.init_db()
        logger.info(f"Checkpoint store opened at {db_path}")

    return ServiceContainer(
        settings=SettingsService(),
        experiment=ExperimentService(),
        events=event_bus,
    )


async def shutdown() -> None:
    """Clean up resources (close database connection)."""
    await db.close()
