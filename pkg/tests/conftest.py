import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from smokewatch.model import ModelConfig

settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """Smallest legal geometry; keeps forward passes around a millisecond."""
    return ModelConfig(
        input_size=32,
        backbone_channels=(4, 8, 16, 32, 64),
        neck_channels=(64, 64),
        hidden_dim=16,
        num_classes=2,
    )


@pytest.fixture
def reduced_config():
    """The 64x64 configuration used for gradient and training checks."""
    return ModelConfig(
        input_size=64,
        backbone_channels=(8, 16, 32, 64, 128),
        neck_channels=(128, 128),
        hidden_dim=128,
        num_classes=2,
    )


def random_image(rng, size: int) -> np.ndarray:
    return rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
