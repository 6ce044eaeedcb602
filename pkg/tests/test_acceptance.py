"""End-to-end runs on a 200-entity synthetic pair. Deselect with ``-m 'not slow'``."""
from pathlib import Path

import pytest

from config import Variant
from services.settings_service import ExperimentSettings

pytestmark = pytest.mark.slow


def _settings(output_dir: Path, variant: Variant) -> ExperimentSettings:
    return ExperimentSettings(
        output_dir=output_dir,
        run_name=variant.value,
        variant=variant,
        synth_entities=200,
        synth_noise=0.1,
        train_fraction=0.3,
        d_e=64,
        max_epochs=60,
        refresh_period=10,
        learning_rate=0.005,
        plots=False,
    )


class TestSyntheticAcceptance:
    async def test_full_pipeline_beats_basic_variant(self, services, tmp_path: Path):
        full = await services.experiment.run_experiment(_settings(tmp_path, Variant.FULL))
        basic = await services.experiment.run_experiment(_settings(tmp_path, Variant.BASIC))

        assert full.headline.alignment == "global"
        assert basic.headline.alignment == "local"
        assert full.headline.hits[1] >= 0.90
        assert full.headline.hits[1] > basic.headline.hits[1]

        compared = 0
        for record in full.rounds:
            for attr in ("r_p", "r_n"):
                filtered = getattr(record.quality, attr) if record.quality else None
                local = getattr(record.local_quality, attr) if record.local_quality else None
                if filtered is None and local is None:
                    continue
                assert filtered is not None and local is not None, (record.round, attr)
                assert filtered <= local + 1e-12, (record.round, attr, filtered, local)
                compared += 1
        assert compared
