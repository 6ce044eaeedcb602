import json
import sqlite3
import logging
from datetime import datetime
from typing import Any, Dict, List, Optional

import numpy as np

from database.helpers import CheckpointNotFoundError, DatabaseError, _decode_array, _encode_array
from models.entities import Checkpoint

logger = logging.getLogger(__name__)


class CheckpointsMixin:
    """Parameter-group snapshots keyed by (run, epoch)."""

    async def save_checkpoint(
        self,
        run: str,
        epoch: int,
        encoder_config: Dict[str, Any],
        groups: Dict[str, np.ndarray],
    ) -> int:
        """Store every group as float32; an existing (run, epoch) is replaced."""
        try:
            encoded = [(name, *_encode_array(values)) for name, values in sorted(groups.items())]
            async with self._get_connection() as conn:
                await conn.execute("DELETE FROM checkpoints WHERE run=? AND epoch=?", (run, epoch))
                cursor = await conn.execute(
                    "INSERT INTO checkpoints (run, epoch, created_at, encoder_config) VALUES (?,?,?,?)",
                    (run, epoch, datetime.now().isoformat(), json.dumps(encoder_config, sort_keys=True))
                )
                checkpoint_id = cursor.lastrowid
                await conn.executemany(
                    "INSERT INTO param_groups (checkpoint_id, name, shape, payload) VALUES (?,?,?,?)",
                    [(checkpoint_id, name, shape, payload) for name, shape, payload in encoded]
                )
                await conn.commit()
            logger.debug(f"Saved checkpoint {run}@{epoch} ({len(encoded)} groups)")
            return checkpoint_id
        except (sqlite3.Error, ValueError, KeyError, TypeError) as e:
            logger.error(f"Error saving checkpoint {run}@{epoch}: {e}")
            raise DatabaseError(f"Failed to save checkpoint: {e}") from e

    async def load_checkpoint(self, run: str, epoch: Optional[int] = None) -> Checkpoint:
        """Load the checkpoint at ``epoch``, or the latest one of the run."""
        try:
            async with self._get_connection() as conn:
                if epoch is None:
                    query, args = "SELECT * FROM checkpoints WHERE run=? ORDER BY epoch DESC LIMIT 1", (run,)
                else:
                    query, args = "SELECT * FROM checkpoints WHERE run=? AND epoch=?", (run, epoch)
                async with conn.execute(query, args) as cursor:
                    row = await cursor.fetchone()
                if row is None:
                    raise CheckpointNotFoundError(run, epoch)
                async with conn.execute(
                    "SELECT name, shape, payload FROM param_groups WHERE checkpoint_id=? ORDER BY name",
                    (row["id"],)
                ) as cursor:
                    groups = {r["name"]: _decode_array(r["shape"], r["payload"]) async for r in cursor}
            return Checkpoint(
                run=row["run"],
                epoch=row["epoch"],
                created_at=row["created_at"],
                encoder_config=json.loads(row["encoder_config"]),
                groups=groups,
            )
        except CheckpointNotFoundError:
            raise
        except (sqlite3.Error, ValueError, KeyError, TypeError) as e:
            logger.error(f"Error loading checkpoint {run}@{epoch}: {e}")
            raise DatabaseError(f"Failed to load checkpoint: {e}") from e

    async def list_checkpoints(self, run: Optional[str] = None) -> List[Dict[str, Any]]:
        try:
            async with self._get_connection() as conn:
                if run is None:
                    query, args = "SELECT run, epoch, created_at FROM checkpoints ORDER BY run, epoch", ()
                else:
                    query, args = "SELECT run, epoch, created_at FROM checkpoints WHERE run=? ORDER BY epoch", (run,)
                async with conn.execute(query, args) as cursor:
                    return [dict(r) async for r in cursor]
        except sqlite3.Error as e:
            logger.error(f"Error listing checkpoints: {e}")
            raise DatabaseError(f"Failed to list checkpoints: {e}") from e
