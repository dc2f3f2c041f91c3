"""Minimal differentiable-computation substrate (numpy, reverse mode)."""

from .checkpoint import CheckpointError, load_checkpoint, read_checkpoint, save_checkpoint
from .functional import (
    bce_with_logits,
    conv2d,
    dropout,
    linear,
    max_pool2d,
    normalize_feature,
    normalize_max,
    triplet_loss,
)
from .layers import (
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    Identity,
    Layer,
    MaxPool2d,
    Model,
    Normalize,
    ReLU,
    Residual,
    Sequential,
)
from .tensor import ShapeError, Tensor, as_tensor, parameter
from .train import SGD, TrainResult, TrainSettings, TrainingDiverged, array_batches, train

__all__ = [
    "SGD", "CheckpointError", "Conv2d", "Dense", "Dropout", "Flatten", "Identity", "Layer", "MaxPool2d",
    "Model", "Normalize", "ReLU", "Residual", "Sequential", "ShapeError", "Tensor", "TrainResult",
    "TrainSettings", "TrainingDiverged", "array_batches", "as_tensor", "bce_with_logits", "conv2d",
    "dropout", "linear", "load_checkpoint", "max_pool2d", "normalize_feature", "normalize_max", "parameter", "read_checkpoint",
    "save_checkpoint", "train", "triplet_loss",
]

