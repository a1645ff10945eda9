"""Layers and the MLP / dilated-CNN / LSTM forecasting networks."""

from __future__ import annotations

import copy
import hashlib
import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

FAMILIES = ("MLP", "CNN", "LSTM")


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Dense:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, name: str = "dense"):
        self.weight = Tensor(_uniform(rng, (n_in, n_out), n_in), requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(_uniform(rng, (n_out,), n_in), requires_grad=True, name=f"{name}.bias")
        self.name = name

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise ValueError(f"layer {self.name}: expected input width {self.weight.shape[0]}, "
                             f"got {x.shape[-1]}")
        return ad.matmul(x, self.weight) + self.bias

    def parameters(self):
        return [self.weight, self.bias]


class DilatedConv1d:
    def __init__(self, channels: int, filters: int, kernel: int, dilation: int,
                 rng: np.random.Generator, name: str = "conv"):
        fan_in = channels * kernel
        self.weight = Tensor(_uniform(rng, (filters, channels, kernel), fan_in),
                             requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(_uniform(rng, (filters,), fan_in), requires_grad=True, name=f"{name}.bias")
        self.dilation = dilation
        self.name = name

    def __call__(self, x) -> Tensor:
        if x.shape[1] != self.weight.shape[1]:
            raise ValueError(f"layer {self.name}: expected {self.weight.shape[1]} channels, "
                             f"got {x.shape[1]}")
        return ad.dilated_causal_conv1d(x, self.weight, self.bias, self.dilation)

    def parameters(self):
        return [self.weight, self.bias]


class LSTM:
    """Single-layer LSTM returning the final hidden state."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator, name: str = "lstm"):
        self.hidden = hidden
        self.w_in = Tensor(_uniform(rng, (n_in, 4 * hidden), hidden), requires_grad=True,
                           name=f"{name}.w_in")
        self.w_rec = Tensor(_uniform(rng, (hidden, 4 * hidden), hidden), requires_grad=True,
                            name=f"{name}.w_rec")
        self.bias = Tensor(_uniform(rng, (4 * hidden,), hidden), requires_grad=True,
                           name=f"{name}.bias")
        self.name = name

    def run(self, seq: np.ndarray) -> Tensor:
        """``seq`` is ``[batch, time, n_in]``; returns the packed final ``[h | c]``."""
        if seq.shape[-1] != self.w_in.shape[0]:
            raise ValueError(f"layer {self.name}: expected {self.w_in.shape[0]} inputs per step, "
                             f"got {seq.shape[-1]}")
        state = Tensor(np.zeros((seq.shape[0], 2 * self.hidden)))
        for t in range(seq.shape[1]):
            state = ad.lstm_cell(seq[:, t, :], state, self.w_in, self.w_rec, self.bias)
        return state

    def __call__(self, seq: np.ndarray) -> Tensor:
        return self.run(seq)[:, :self.hidden]

    def parameters(self):
        return [self.w_in, self.w_rec, self.bias]


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture sizes. Input is ``stations_in x lookback`` demand plus
    ``feature_width`` calendar features; output is ``stations_out x horizon``."""

    family: str
    stations_in: int = 1
    stations_out: int = 1
    lookback: int = 21
    horizon: int = 7
    feature_width: int = 42
    cnn_filters: int = 256
    cnn_kernel: int = 2
    cnn_dilation: int = 7
    lstm_units: int = 32

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown network family {self.family!r}; expected one of {FAMILIES}")
        for name in ("stations_in", "stations_out", "lookback", "horizon", "cnn_filters",
                     "cnn_kernel", "cnn_dilation", "lstm_units"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.feature_width < 0:
            raise ValueError("feature_width must be nonnegative")

    @property
    def input_width(self) -> int:
        return self.stations_in * self.lookback + self.feature_width

    @property
    def output_width(self) -> int:
        return self.stations_out * self.horizon

    @property
    def mlp_hidden(self) -> int:
        # mean of input and output layer sizes, halves rounded up
        return int(math.floor((self.input_width + self.output_width) / 2 + 0.5))

    @property
    def cnn_positions(self) -> int:
        return self.lookback - self.cnn_dilation * (self.cnn_kernel - 1)

    def expected_param_count(self) -> int:
        i, o = self.input_width, self.output_width
        if self.family == "MLP":
            h = self.mlp_hidden
            return i * h + h + h * o + o
        if self.family == "CNN":
            f = self.cnn_filters
            conv = f * self.stations_in * self.cnn_kernel + f
            head_in = f * self.cnn_positions + self.feature_width
            return conv + head_in * o + o
        u = self.lstm_units
        lstm = self.stations_in * 4 * u + u * 4 * u + 4 * u
        return lstm + (u + self.feature_width) * o + o


class Network:
    """A forecasting network; parameters are mutated in place by training."""

    def __init__(self, spec: NetworkSpec, seed: int = 0):
        self.spec = spec
        rng = np.random.default_rng(seed)
        if spec.family == "MLP":
            self.layers = [Dense(spec.input_width, spec.mlp_hidden, rng, "hidden"),
                           Dense(spec.mlp_hidden, spec.output_width, rng, "head")]
        elif spec.family == "CNN":
            if spec.cnn_positions <= 0:
                raise ValueError("CNN receptive span exceeds the lookback")
            head_in = spec.cnn_filters * spec.cnn_positions + spec.feature_width
            self.layers = [DilatedConv1d(spec.stations_in, spec.cnn_filters, spec.cnn_kernel,
                                         spec.cnn_dilation, rng, "conv"),
                           Dense(head_in, spec.output_width, rng, "head")]
        else:
            self.layers = [LSTM(spec.stations_in, spec.lstm_units, rng, "lstm"),
                           Dense(spec.lstm_units + spec.feature_width, spec.output_width, rng, "head")]

    # ------------------------------------------------------------ parameters
    def parameters(self) -> "OrderedDict[str, Tensor]":
        out = OrderedDict()
        for layer in self.layers:
            for p in layer.parameters():
                out[p.name] = p
        return out

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self.parameters().values()])

    def set_flat(self, flat: np.ndarray):
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.param_count():
            raise ValueError(f"expected {self.param_count()} parameters, got {flat.size}")
        i = 0
        for p in self.parameters().values():
            p.data = flat[i:i + p.size].reshape(p.shape).copy()
            i += p.size

    def zero_grad(self):
        for p in self.parameters().values():
            p.grad = None

    def checksum(self) -> str:
        h = hashlib.sha256()
        for p in self.parameters().values():
            h.update(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
        return h.hexdigest()

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    # --------------------------------------------------------------- forward
    def forward(self, lookback: np.ndarray, features: np.ndarray) -> Tensor:
        """``lookback`` ``[batch, stations_in, lookback]``, ``features``
        ``[batch, feature_width]`` (or ``[batch, 7, 6]``); returns
        ``[batch, stations_out*horizon]`` in normalized units, no output activation."""
        spec = self.spec
        lookback = np.asarray(lookback, dtype=float)
        features = np.asarray(features, dtype=float).reshape(len(lookback), -1)
        if lookback.shape[1:] != (spec.stations_in, spec.lookback):
            raise ValueError(f"input layer: expected lookback block "
                             f"{(spec.stations_in, spec.lookback)}, got {lookback.shape[1:]}")
        if features.shape[1] != spec.feature_width:
            raise ValueError(f"input layer: expected {spec.feature_width} features, "
                             f"got {features.shape[1]}")
        B = len(lookback)
        if spec.family == "MLP":
            hidden, head = self.layers
            x = Tensor(np.concatenate([lookback.reshape(B, -1), features], axis=1))
            return head(ad.relu(hidden(x)))
        if spec.family == "CNN":
            conv, head = self.layers
            z = ad.relu(conv(Tensor(lookback)))
            z = ad.reshape(z, (B, -1))
            return head(ad.concat([z, Tensor(features)], axis=1))
        lstm, head = self.layers
        h = lstm(np.transpose(lookback, (0, 2, 1)))
        return head(ad.concat([h, Tensor(features)], axis=1))

    def predict(self, lookback, features) -> np.ndarray:
        """Forward pass as a plain array ``[batch, stations_out, horizon]``."""
        out = self.forward(lookback, features).data
        return out.reshape(len(out), self.spec.stations_out, self.spec.horizon)


def forward(network: Network, windows) -> Tensor:
    """Predictions ``[batch, output_width]`` for a :class:`~transitbench.data.WindowBatch`."""
    return network.forward(windows.lookback, windows.flat_features)


def spec_for(family: str, stations_in: int, stations_out: int, **overrides) -> NetworkSpec:
    return NetworkSpec(family=family, stations_in=stations_in, stations_out=stations_out,
                       **overrides)
