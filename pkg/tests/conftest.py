import numpy as np
import pytest

from config import TestingConfig
from gloss.parsers.dataset import make_blobs, split
from gloss.training.config import TrainConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_blobs():
    """90 pontos, 3 classes bem separadas"""
    return make_blobs(90, 5, 3, cluster_sep=6.0, seed=7)


@pytest.fixture
def small_splits(small_blobs):
    return split(small_blobs, 0.6, 0.2, seed=0)


@pytest.fixture
def fast_config():
    return TrainConfig(batch_size=16, max_epochs=3, patience=3, embedding_dim=4, eta=0.01,
                       sigma=1.0, head_epochs=20, seeds=(0, 1))


@pytest.fixture
def testing_settings(tmp_path):
    class Settings(TestingConfig):
        OUTPUT_FOLDER = str(tmp_path / 'out')
        LOG_FILE = None
    return Settings
