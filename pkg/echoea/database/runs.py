import json
import sqlite3
import logging
from datetime import datetime
from typing import Any, Dict, List, Sequence

from database.helpers import DatabaseError
from models.entities import BootstrapRoundRecord, EpochRecord

logger = logging.getLogger(__name__)

_HISTORY_COLUMNS = ("epoch", "loss", "p_plus", "p_iter_plus", "p_iter_minus", "hits_1", "hits_10", "mrr")
_ROUND_COLUMNS = (
    "round", "epoch", "p_iter_plus", "p_iter_minus", "p_global",
    "r_u", "r_p", "r_n", "local_r_u", "local_r_p", "local_r_n",
)


class RunsMixin:
    """Run provenance, per-epoch history and bootstrap rounds."""

    # ========================================================================
    # Runs
    # ========================================================================

    async def save_run(self, name: str, variant: str, settings: Dict[str, Any]) -> None:
        try:
            async with self._get_connection() as conn:
                await conn.execute(
                    "INSERT OR REPLACE INTO runs (name, variant, settings, created_at) VALUES (?,?,?,?)",
                    (name, variant, json.dumps(settings, sort_keys=True, default=str), datetime.now().isoformat())
                )
                await conn.commit()
        except (sqlite3.Error, ValueError, KeyError, TypeError) as e:
            logger.error(f"Error saving run {name}: {e}")
            raise DatabaseError(f"Failed to save run: {e}") from e

    async def list_runs(self) -> List[Dict[str, Any]]:
        try:
            async with self._get_connection() as conn:
                async with conn.execute("SELECT * FROM runs ORDER BY name") as cursor:
                    result = []
                    async for r in cursor:
                        run = dict(r)
                        run["settings"] = json.loads(run["settings"])
                        result.append(run)
                    return result
        except (sqlite3.Error, ValueError) as e:
            logger.error(f"Error listing runs: {e}")
            raise DatabaseError(f"Failed to list runs: {e}") from e

    # ========================================================================
    # History and bootstrap rounds
    # ========================================================================

    async def save_history(self, run: str, records: Sequence[EpochRecord]) -> None:
        rows = [(run, *(r.to_row()[c] for c in _HISTORY_COLUMNS)) for r in records]
        placeholders = ",".join("?" * (len(_HISTORY_COLUMNS) + 1))
        try:
            async with self._get_connection() as conn:
                await conn.execute("DELETE FROM history WHERE run=?", (run,))
                await conn.executemany(
                    f"INSERT INTO history (run,{','.join(_HISTORY_COLUMNS)}) VALUES ({placeholders})", rows
                )
                await conn.commit()
        except (sqlite3.Error, ValueError, KeyError, TypeError) as e:
            logger.error(f"Error saving history of {run}: {e}")
            raise DatabaseError(f"Failed to save history: {e}") from e

    async def load_history(self, run: str) -> List[Dict[str, Any]]:
        try:
            async with self._get_connection() as conn:
                async with conn.execute(
                    f"SELECT {','.join(_HISTORY_COLUMNS)} FROM history WHERE run=? ORDER BY epoch", (run,)
                ) as cursor:
                    return [dict(r) async for r in cursor]
        except sqlite3.Error as e:
            logger.error(f"Error loading history of {run}: {e}")
            raise DatabaseError(f"Failed to load history: {e}") from e

    async def save_bootstrap_rounds(self, run: str, rounds: Sequence[BootstrapRoundRecord]) -> None:
        rows = [(run, *(r.to_row()[c] for c in _ROUND_COLUMNS)) for r in rounds]
        placeholders = ",".join("?" * (len(_ROUND_COLUMNS) + 1))
        try:
            async with self._get_connection() as conn:
                await conn.execute("DELETE FROM bootstrap_rounds WHERE run=?", (run,))
                await conn.executemany(
                    f"INSERT INTO bootstrap_rounds (run,{','.join(_ROUND_COLUMNS)}) VALUES ({placeholders})", rows
                )
                await conn.commit()
        except (sqlite3.Error, ValueError, KeyError, TypeError) as e:
            logger.error(f"Error saving bootstrap rounds of {run}: {e}")
            raise DatabaseError(f"Failed to save bootstrap rounds: {e}") from e

    async def load_bootstrap_rounds(self, run: str) -> List[Dict[str, Any]]:
        try:
            async with self._get_connection() as conn:
                async with conn.execute(
                    f"SELECT {','.join(_ROUND_COLUMNS)} FROM bootstrap_rounds WHERE run=? ORDER BY round", (run,)
                ) as cursor:
                    return [dict(r) async for r in cursor]
        except sqlite3.Error as e:
            logger.error(f"Error loading bootstrap rounds of {run}: {e}")
            raise DatabaseError(f"Failed to load bootstrap rounds: {e}") from e
