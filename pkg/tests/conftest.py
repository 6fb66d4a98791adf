import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from uqss.pipeline import PipelineConfig, train_pipeline


@pytest.fixture(scope="session")
def small_d1_pipeline():
    """One quickly trained pipeline on a small slice of the sine benchmark,
    shared by tests that only need a plausibly trained bundle."""
    cfg = PipelineConfig(
        generator="d1",
        n_samples=600,
        data_seed=5,
        split_seed=6,
        n_select=25,
        nominals=(0.9,),
        base_seed=3,
        epochs=300,
    )
    return train_pipeline(cfg)
