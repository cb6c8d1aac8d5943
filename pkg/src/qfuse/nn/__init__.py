"""Minimal double-precision neural network engine over layer graphs."""

from .fusion import (ShapeMismatchError, TokenDimMismatchError,
                     fusion_backward, fusion_forward, init_fusion_params)
from .network import Network, NonFiniteLossError
from .train import Adam, TrainConfig, accuracy, predict_logits, train

__all__ = [
    "Adam", "Network", "NonFiniteLossError", "ShapeMismatchError",
    "TokenDimMismatchError", "TrainConfig", "accuracy", "fusion_backward",
    "fusion_forward", "init_fusion_params", "predict_logits", "train",
]
