import numpy as np
import pytest

from amava.classifier import TrainConfig, train
from amava.corpus import make_feature_dataset
from amava.frames import GrayFrame


@pytest.fixture(scope="session")
def trained_model():
    """One seeded model fit on the synthetic corpus, shared across tests."""
    features, labels = make_feature_dataset(n_per_class=200, seed=11)
    params, scaler, report = train(features, labels, TrainConfig(seed=11))
    return params, scaler, report


def texture(seed: int, height: int, width: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(height, width), dtype=np.uint8)


def frame_pair_shifted(seed: int, size=(128, 128), shift: int = 3, t0: float = 0.0):
    """Texture pair where the content moves `shift` px to the right."""
    height, width = size[1], size[0]
    wide = texture(seed, height, width + shift)
    first = GrayFrame(wide[:, shift : width + shift].copy(), t0)
    second = GrayFrame(wide[:, 0:width].copy(), t0 + 500.0)
    return first, second
