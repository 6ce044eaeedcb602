"""Shared fixtures for EchoEA tests."""
from pathlib import Path

import numpy as np
import pytest
import pytest_asyncio

import database as db_module
from core import ServiceContainer, bootstrap
from database import db
from events import event_bus
from models.entities import KnowledgeGraph, SeedPairs
from services.synthetic import synth_kg_pair


async def _reset_db() -> None:
    await db.close()
    db._initialized = False
    db._conn_lock = None
    db._init_lock = None


@pytest_asyncio.fixture
async def store(tmp_path: Path):
    """The db singleton pointed at a fresh file under tmp_path."""
    await _reset_db()
    event_bus.clear()
    db_module.DB_PATH = tmp_path / "store.db"
    await db.init_db()

    yield db

    await _reset_db()
    db_module.DB_PATH = db_module._DEFAULT_DB_PATH


@pytest_asyncio.fixture
async def services(tmp_path: Path) -> ServiceContainer:
    """A fresh ServiceContainer; runs write under tmp_path."""
    await _reset_db()
    event_bus.clear()

    svc = await bootstrap()

    yield svc

    await _reset_db()
    event_bus.clear()
    db_module.DB_PATH = db_module._DEFAULT_DB_PATH


@pytest.fixture(autouse=True)
def _clean_event_bus():
    yield
    event_bus.clear()


# ---------------------------------------------------------------------------
# Toy graphs
# ---------------------------------------------------------------------------

@pytest.fixture
def toy_kg() -> KnowledgeGraph:
    """Four entities, two relations, a path 0->1->2 and an isolated entity 3."""
    return KnowledgeGraph(
        entity_uris=[f"kg/e{i}" for i in range(4)],
        relation_uris=["kg/r0", "kg/r1"],
        attribute_names=["kg/name", "kg/birth_date"],
        values=["alice", "1990", "bob"],
        rel_triples=[(0, 0, 1), (1, 1, 2)],
        attr_triples=[(0, 0, 0), (0, 1, 1), (1, 0, 2)],
    )


@pytest.fixture
def toy_pair():
    """Two-entity KGs with one relation and one seed, as in the loader round trip."""
    kg1 = KnowledgeGraph(entity_uris=["zh/a", "zh/b"], relation_uris=["zh/r"], rel_triples=[(0, 0, 1)])
    kg2 = KnowledgeGraph(entity_uris=["en/a", "en/b"], relation_uris=["en/r"], rel_triples=[(0, 0, 1)])
    return kg1, kg2, SeedPairs(((0, 0),))


@pytest.fixture
def small_synth():
    """Deterministic 30-entity synthetic pair with 16-dim embeddings."""
    return synth_kg_pair(30, 4, 3.0, 6, 0.1, rng_seed=7, dim=16)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
