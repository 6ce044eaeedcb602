import aiosqlite
import asyncio
import sqlite3
import logging
import threading
from contextlib import asynccontextmanager
from typing import Optional, AsyncIterator

import database as _pkg
from config import CHECKPOINT_SCHEMA_VERSION
from database.helpers import DatabaseError

logger = logging.getLogger(__name__)


class DatabaseCore:
    """Async SQLite store with a persistent connection and an async lock.

    SQLite only tolerates one writer, so access to the single lazily opened
    connection is serialised. The file is tagged with a schema version in the
    ``meta`` table; opening a store written by another version fails.
    """
    _instance: Optional["DatabaseCore"] = None
    _instance_lock = threading.Lock()

    def __new__(cls) -> "DatabaseCore":
        if cls._instance is None:
            with cls._instance_lock:
                if cls._instance is None:
                    cls._instance = super().__new__(cls)
                    cls._instance._initialized = False
                    cls._instance._init_lock: Optional[asyncio.Lock] = None
                    cls._instance._conn: Optional[aiosqlite.Connection] = None
                    cls._instance._conn_lock: Optional[asyncio.Lock] = None
        return cls._instance

    async def _ensure_connection(self) -> aiosqlite.Connection:
        """Ensure we have an open connection, creating one if needed."""
        if self._conn is None:
            try:
                self._conn = await aiosqlite.connect(_pkg.DB_PATH)
                self._conn.row_factory = aiosqlite.Row
                await self._conn.execute("PRAGMA busy_timeout=5000")
                await self._conn.execute("PRAGMA foreign_keys=ON")
            except (sqlite3.Error, OSError) as e:
                self._conn = None
                raise DatabaseError(f"Cannot open checkpoint store at {_pkg.DB_PATH}: {e}") from e
        return self._conn

    async def _get_lock(self) -> asyncio.Lock:
        if self._conn_lock is None:
            self._conn_lock = asyncio.Lock()
        return self._conn_lock

    @asynccontextmanager
    async def _get_connection(self) -> AsyncIterator[aiosqlite.Connection]:
        """Get a database connection with serialized access."""
        lock = await self._get_lock()
        async with lock:
            conn = await self._ensure_connection()
            yield conn

    async def close(self) -> None:
        """Close the persistent connection; the next call reopens at DB_PATH."""
        if self._conn is not None:
            try:
                await self._conn.close()
            except (sqlite3.Error, OSError) as e:
                logger.warning(f"Error closing checkpoint store: {e}")
            finally:
                self._conn = None
                self._initialized = False

    async def _get_init_lock(self) -> asyncio.Lock:
        if self._init_lock is None:
            self._init_lock = asyncio.Lock()
        return self._init_lock

    async def init_db(self) -> None:
        """Create the schema if needed and check the version tag."""
        lock = await self._get_init_lock()
        async with lock:
            if self._initialized:
                return
            async with self._get_connection() as conn:
                await self._init_schema(conn)
                await self._check_version(conn)
                await conn.commit()
            self._initialized = True

    async def _init_schema(self, conn: aiosqlite.Connection) -> None:
        try:
            await conn.executescript("""
                CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
                CREATE TABLE IF NOT EXISTS checkpoints (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run TEXT NOT NULL,
                    epoch INTEGER NOT NULL,
                    created_at TEXT NOT NULL,
                    encoder_config TEXT NOT NULL,
                    UNIQUE (run, epoch)
                );
                CREATE TABLE IF NOT EXISTS param_groups (
                    checkpoint_id INTEGER NOT NULL,
                    name TEXT NOT NULL,
                    shape TEXT NOT NULL,
                    payload BLOB NOT NULL,
                    PRIMARY KEY (checkpoint_id, name),
                    FOREIGN KEY (checkpoint_id) REFERENCES checkpoints(id) ON DELETE CASCADE
                );
                CREATE TABLE IF NOT EXISTS runs (
                    name TEXT PRIMARY KEY,
                    variant TEXT NOT NULL,
                    settings TEXT NOT NULL,
                    created_at TEXT NOT NULL
                );
                CREATE TABLE IF NOT EXISTS history (
                    run TEXT NOT NULL, epoch INTEGER NOT NULL, loss REAL NOT NULL,
                    p_plus INTEGER, p_iter_plus INTEGER, p_iter_minus INTEGER,
                    hits_1 REAL, hits_10 REAL, mrr REAL,
                    PRIMARY KEY (run, epoch)
                );
                CREATE TABLE IF NOT EXISTS bootstrap_rounds (
                    run TEXT NOT NULL, round INTEGER NOT NULL, epoch INTEGER NOT NULL,
                    p_iter_plus INTEGER, p_iter_minus INTEGER, p_global INTEGER,
                    r_u REAL, r_p REAL, r_n REAL,
                    local_r_u REAL, local_r_p REAL, local_r_n REAL,
                    PRIMARY KEY (run, round)
                );
                CREATE INDEX IF NOT EXISTS idx_checkpoints_run ON checkpoints(run);
            """)
        except (sqlite3.Error, ValueError, KeyError, TypeError) as e:
            logger.error(f"Error initializing checkpoint schema: {e}")
            raise DatabaseError(f"Failed to initialize schema: {e}") from e

    async def _check_version(self, conn: aiosqlite.Connection) -> None:
        try:
            async with conn.execute("SELECT value FROM meta WHERE key='schema_version'") as cursor:
                row = await cursor.fetchone()
            if row is None:
                await conn.execute(
                    "INSERT INTO meta (key, value) VALUES ('schema_version', ?)",
                    (CHECKPOINT_SCHEMA_VERSION,)
                )
            elif row["value"] != CHECKPOINT_SCHEMA_VERSION:
                raise DatabaseError(
                    f"Checkpoint store version '{row['value']}' is not '{CHECKPOINT_SCHEMA_VERSION}'"
                )
        except sqlite3.Error as e:
            logger.error(f"Error reading checkpoint schema version: {e}")
            raise DatabaseError(f"Failed to read schema version: {e}") from e

    async def schema_version(self) -> Optional[str]:
        try:
            async with self._get_connection() as conn:
                async with conn.execute("SELECT value FROM meta WHERE key='schema_version'") as cursor:
                    row = await cursor.fetchone()
                    return row["value"] if row else None
        except sqlite3.Error as e:
            logger.error(f"Error reading schema version: {e}")
            raise DatabaseError(f"Failed to read schema version: {e}") from e
