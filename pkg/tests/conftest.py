import numpy as np
import pytest

from deadend_rl.core import RunConfig
from deadend_rl.harness import DatasetSpec, generate_dataset
from deadend_rl.kb import TOY_TABLE


@pytest.fixture
def toy_table():
    return TOY_TABLE


@pytest.fixture(scope="session")
def movie_dataset():
    """Small generated domain shared by the slower integration tests."""
    return generate_dataset(DatasetSpec(slots=5, entries=40, goals=32), seed=7)


@pytest.fixture
def fast_config():
    return RunConfig(warm_start_epochs=2, dialogues_per_epoch=5,
                     train_epochs=3, eval_every=1, eval_episodes=5,
                     buffer_capacity=500)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
