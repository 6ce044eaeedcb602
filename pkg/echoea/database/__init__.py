"""Checkpoint and run store - async SQLite with mixin-based composition.

``from database import db, DatabaseError`` is the public entry point.
"""
from pathlib import Path

from config import CHECKPOINT_DB

_DEFAULT_DB_PATH = Path(CHECKPOINT_DB)
DB_PATH: Path = _DEFAULT_DB_PATH

from database.helpers import DatabaseError, CheckpointNotFoundError  # noqa: E402
from database.core import DatabaseCore  # noqa: E402
from database.checkpoints import CheckpointsMixin  # noqa: E402
from database.runs import RunsMixin  # noqa: E402


class Database(DatabaseCore, CheckpointsMixin, RunsMixin):
    """Composed database class combining all mixins."""
    pass


def configure_db_path(path: Path) -> None:
    """Point the store at ``path`` before a connection is opened.

    Raises:
        RuntimeError: If the database connection is already open.
    """
    global DB_PATH
    if Database._instance is not None and Database._instance._conn is not None:
        raise RuntimeError(
            "Cannot change DB_PATH after a database connection has been opened. "
            "Call db.close() first."
        )
    DB_PATH = path


db = Database()
