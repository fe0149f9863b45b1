import math

import pytest

from core import make_rng
from trainer import SyntheticTaskSpec, TrainConfig


@pytest.fixture
def rng():
    return make_rng(42)


@pytest.fixture
def small_task():
    """Tiny classification task that trains in well under a second per epoch."""
    return SyntheticTaskSpec(T=8, H=2, W=2, clips_per_class=5, seed=7,
                             class_tones=[math.pi / 2, 3 * math.pi / 4])


@pytest.fixture
def small_config():
    return TrainConfig(epochs=2, batch_size=4, hidden=6, seed=7)
