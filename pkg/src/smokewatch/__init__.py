"""A small CNN image classifier for smoking detection, with dataset
augmentation tooling, detection metrics, and an inference pipeline benchmark.
"""

from .errors import (
    ContractError,
    DataError,
    ImageFormatError,
    ManifestError,
    ShapeError,
    WeightsFormatError,
)
from .model import (
    ClassScores,
    ModelConfig,
    ProposedModel,
    TrainConfig,
    build,
    fit,
    forward,
    load_weights,
    save_weights,
)

__all__ = [
    "ClassScores",
    "ContractError",
    "DataError",
    "ImageFormatError",
    "ManifestError",
    "ModelConfig",
    "ProposedModel",
    "ShapeError",
    "TrainConfig",
    "WeightsFormatError",
    "build",
    "fit",
    "forward",
    "load_weights",
    "save_weights",
]

__version__ = "0.1.0"
