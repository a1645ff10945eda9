"""Mini-batch gradient descent: optimizers, training and online fine-tuning."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ModelError
from . import autodiff as ad
from .network import Network


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"  # "adam" | "sgd"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss: str = "mse"

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.loss != "mse":
            raise ValueError("only the mse loss is supported")


class Optimizer:
    """Per-parameter state keyed by parameter name, so it can be checkpointed."""

    def __init__(self, config: TrainConfig):
        self.config = config
        self.state: dict[str, np.ndarray] = {}
        self.steps = 0

    def step(self, params):
        raise NotImplementedError

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {f"opt/{k}": v for k, v in self.state.items()}
        out["opt/steps"] = np.array([float(self.steps)])
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        self.state = {k[4:]: np.array(v) for k, v in arrays.items()
                      if k.startswith("opt/") and k != "opt/steps"}
        self.steps = int(arrays.get("opt/steps", [0])[0])


class SGDMomentum(Optimizer):
    def step(self, params):
        lr, mu = self.config.learning_rate, self.config.momentum
        self.steps += 1
        for name, p in params.items():
            if p.grad is None:
                continue
            v = self.state.get(f"v/{name}")
            v = -lr * p.grad if v is None else mu * v - lr * p.grad
            self.state[f"v/{name}"] = v
            p.data = p.data + v


class Adam(Optimizer):
    def step(self, params):
        c = self.config
        self.steps += 1
        t = self.steps
        step_size = c.learning_rate / (1 - c.beta1 ** t)
        v_scale = 1.0 / math.sqrt(1 - c.beta2 ** t)
        for name, p in params.items():
            g = p.grad
            if g is None:
                continue
            m = self.state.setdefault(f"m/{name}", np.zeros_like(g))
            v = self.state.setdefault(f"v/{name}", np.zeros_like(g))
            m *= c.beta1
            m += (1 - c.beta1) * g
            v *= c.beta2
            g *= g
            g *= 1 - c.beta2
            v += g
            denom = np.sqrt(v)
            denom *= v_scale
            denom += c.eps
            np.divide(m, denom, out=denom)
            denom *= step_size
            p.data = p.data - denom


def make_optimizer(config: TrainConfig) -> Optimizer:
    return Adam(config) if config.optimizer == "adam" else SGDMomentum(config)


def backward(network: Network, lookback, features, targets) -> float:
    """MSE over batch and output units; leaves gradients on the parameters."""
    network.zero_grad()
    pred = network.forward(lookback, features)
    targets = np.asarray(targets, dtype=float).reshape(pred.shape)
    loss = ad.mse(pred, targets)
    loss.backward()
    return float(loss.data)


@dataclass
class TrainResult:
    network: Network
    loss_trace: list[float] = field(default_factory=list)
    optimizer: Optimizer | None = None


def _epochs(network, windows, config: TrainConfig, optimizer: Optimizer, rng, epochs: int):
    n = len(windows)
    params = network.parameters()
    lookback, features = windows.lookback, windows.flat_features
    target = windows.target.reshape(n, -1)
    trace = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss = backward(network, lookback[idx], features[idx], target[idx])
            if not math.isfinite(loss):
                raise ModelError(f"loss became {loss} at epoch {epoch + 1} "
                                 f"(learning rate {config.learning_rate})")
            optimizer.step(params)
            total += loss * len(idx)
        trace.append(total / n)
    network.zero_grad()
    return trace


def train(network: Network, windows, config: TrainConfig,
          optimizer: Optimizer | None = None) -> TrainResult:
    """Shuffled mini-batch training; the shuffle is seeded by ``config.seed``.

    ``loss_trace[k]`` is the mean training loss during epoch ``k``.
    """
    if len(windows) < 1:
        raise ModelError("training needs at least one window")
    optimizer = optimizer or make_optimizer(config)
    rng = np.random.default_rng(config.seed)
    trace = _epochs(network, windows, config, optimizer, rng, config.epochs)
    return TrainResult(network, trace, optimizer)


def fine_tune(network: Network, recent_windows, config: TrainConfig,
              optimizer: Optimizer | None = None, rng_key=()) -> TrainResult:
    """Continue descent from the current parameters on ``recent_windows`` only.

    ``rng_key`` extends the shuffle seed so each online step draws its own,
    reproducible permutation.
    """
    optimizer = optimizer or make_optimizer(config)
    if config.epochs == 0 or len(recent_windows) == 0:
        return TrainResult(network, [], optimizer)
    rng = np.random.default_rng([config.seed, *rng_key])
    trace = _epochs(network, recent_windows, config, optimizer, rng, config.epochs)
    return TrainResult(network, trace, optimizer)
