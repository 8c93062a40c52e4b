"""Compositional zero-shot learning with blocked message passing."""

from ._bmpnet import (
    BmpError,
    CheckpointError,
    ConfigError,
    Dataset,
    DatasetError,
    ModelConfig,
    NonFiniteLossError,
    ShapeError,
    SyntheticWorldConfig,
    TrainConfig,
    Trainer,
    calibration_sweep,
    evaluate,
    known_ablations,
    train,
    triplet_term,
)

__all__ = [
    "BmpError",
    "CheckpointError",
    "ConfigError",
    "Dataset",
    "DatasetError",
    "ModelConfig",
    "NonFiniteLossError",
    "ShapeError",
    "SyntheticWorldConfig",
    "TrainConfig",
    "Trainer",
    "calibration_sweep",
    "evaluate",
    "known_ablations",
    "train",
    "triplet_term",
]
