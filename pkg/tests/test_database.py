"""Tests for the checkpoint and run store."""
import numpy as np
import pytest

from config import CHECKPOINT_SCHEMA_VERSION
from database import CheckpointNotFoundError
from models.entities import BootstrapQuality, BootstrapRoundRecord, EpochRecord


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

ENCODER = {"d_e": 4, "d_r": 1, "use_pan": True}


def _groups(seed: int = 0):
    rng = np.random.default_rng(seed)
    return {"pan.gcn": rng.standard_normal((4, 4)), "can.attention": rng.standard_normal(8)}


# ===========================================================================
# Checkpoints
# ===========================================================================

class TestCheckpoints:
    async def test_round_trip_within_float32(self, store):
        groups = _groups()
        await store.save_checkpoint("r", 3, ENCODER, groups)
        loaded = await store.load_checkpoint("r", 3)
        assert loaded.epoch == 3
        assert loaded.encoder_config == ENCODER
        assert set(loaded.groups) == set(groups)
        for name, values in groups.items():
            assert loaded.groups[name].shape == values.shape
            np.testing.assert_allclose(loaded.groups[name], values, rtol=1e-6, atol=1e-6)

    async def test_latest_by_default(self, store):
        await store.save_checkpoint("r", 1, ENCODER, _groups(1))
        await store.save_checkpoint("r", 5, ENCODER, _groups(5))
        await store.save_checkpoint("r", 2, ENCODER, _groups(2))
        assert (await store.load_checkpoint("r")).epoch == 5

    async def test_same_epoch_replaced(self, store):
        await store.save_checkpoint("r", 1, ENCODER, _groups(1))
        await store.save_checkpoint("r", 1, ENCODER, {"only": np.zeros(2)})
        loaded = await store.load_checkpoint("r", 1)
        assert list(loaded.groups) == ["only"]

    async def test_missing_run(self, store):
        with pytest.raises(CheckpointNotFoundError) as exc:
            await store.load_checkpoint("nope")
        assert exc.value.run == "nope"

    async def test_missing_epoch(self, store):
        await store.save_checkpoint("r", 1, ENCODER, _groups())
        with pytest.raises(CheckpointNotFoundError):
            await store.load_checkpoint("r", 7)

    async def test_list_checkpoints(self, store):
        await store.save_checkpoint("b", 2, ENCODER, _groups())
        await store.save_checkpoint("a", 1, ENCODER, _groups())
        await store.save_checkpoint("b", 1, ENCODER, _groups())
        listed = [(c["run"], c["epoch"]) for c in await store.list_checkpoints()]
        assert listed == [("a", 1), ("b", 1), ("b", 2)]
        assert [c["epoch"] for c in await store.list_checkpoints("b")] == [1, 2]


# ===========================================================================
# Runs, history and bootstrap rounds
# ===========================================================================

class TestRuns:
    async def test_schema_version(self, store):
        assert await store.schema_version() == CHECKPOINT_SCHEMA_VERSION

    async def test_list_runs(self, store):
        await store.save_run("full", "full", {"d_e": 8, "variant": "full"})
        await store.save_run("base", "b", {"d_e": 8})
        runs = await store.list_runs()
        assert [r["name"] for r in runs] == ["base", "full"]
        assert runs[1]["settings"] == {"d_e": 8, "variant": "full"}

    async def test_history_round_trip(self, store):
        records = [
            EpochRecord(epoch=1, loss=2.5, p_plus=10, p_iter_plus=0, p_iter_minus=0),
            EpochRecord(epoch=2, loss=1.5, p_plus=12, p_iter_plus=2, p_iter_minus=1, hits_1=0.5, hits_10=0.9, mrr=0.6),
        ]
        await store.save_history("r", records)
        rows = await store.load_history("r")
        assert [r["epoch"] for r in rows] == [1, 2]
        assert rows[0]["hits_1"] is None
        assert rows[1]["mrr"] == pytest.approx(0.6)

    async def test_history_replaced_on_save(self, store):
        await store.save_history("r", [EpochRecord(epoch=1, loss=1.0, p_plus=1, p_iter_plus=0, p_iter_minus=0)])
        await store.save_history("r", [])
        assert await store.load_history("r") == []

    async def test_bootstrap_rounds_round_trip(self, store):
        rounds = [
            BootstrapRoundRecord(
                round=1, epoch=10, p_iter_plus=4, p_iter_minus=2, p_global=5,
                quality=BootstrapQuality(r_u=0.4, r_p=0.25, r_n=0.5),
                local_quality=BootstrapQuality(r_u=0.4, r_p=0.5, r_n=0.5),
            ),
            BootstrapRoundRecord(round=2, epoch=20, p_iter_plus=1, p_iter_minus=0, p_global=6),
        ]
        await store.save_bootstrap_rounds("r", rounds)
        rows = await store.load_bootstrap_rounds("r")
        assert [r["round"] for r in rows] == [1, 2]
        assert rows[0]["r_p"] == pytest.approx(0.25)
        assert rows[0]["local_r_p"] == pytest.approx(0.5)
        assert rows[1]["r_u"] is None
