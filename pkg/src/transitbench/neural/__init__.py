"""Reverse-mode autodiff plus MLP, dilated CNN and LSTM forecasters."""

from .autodiff import Tensor
from .network import FAMILIES, Network, NetworkSpec, forward, spec_for
from .training import TrainConfig, TrainResult, backward, fine_tune, make_optimizer, train

__all__ = [
    "FAMILIES", "Network", "NetworkSpec", "Tensor", "TrainConfig", "TrainResult",
    "backward", "fine_tune", "forward", "make_optimizer", "spec_for", "train",
]
