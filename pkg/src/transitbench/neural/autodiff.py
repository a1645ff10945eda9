"""A small reverse-mode autodiff engine over numpy arrays.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients. ``backward`` walks
the graph in reverse topological order. Two fused ops (dilated causal
convolution, LSTM cell) carry hand-written adjoints for speed.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.name = name

    def __repr__(self):
        return f"Tensor(shape={self.shape}{', grad' if self.requires_grad else ''})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable tensor."""
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=float)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _result(data, parents, backward) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, parents=parents if needs else (),
                  backward=backward if needs else None)


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), back)


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: _accum(a, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), back)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _result(a.data * mask, (a,), lambda g: _accum(a, g * mask))


def sigmoid_np(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a: Tensor) -> Tensor:
    s = sigmoid_np(a.data)
    return _result(s, (a,), lambda g: _accum(a, g * s * (1 - s)))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return _result(t, (a,), lambda g: _accum(a, g * (1 - t * t)))


def square(a: Tensor) -> Tensor:
    return _result(a.data ** 2, (a,), lambda g: _accum(a, 2 * g * a.data))


# ------------------------------------------------------------------ reductions

def sum_all(a: Tensor) -> Tensor:
    return _result(a.data.sum(), (a,), lambda g: _accum(a, np.broadcast_to(g, a.shape)))


def mean_all(a: Tensor) -> Tensor:
    n = a.size

    def back(g):
        _accum(a, np.broadcast_to(g / n, a.shape))

    return _result(a.data.mean(), (a,), back)


def mse(pred: Tensor, target) -> Tensor:
    """Mean over every element of ``(pred - target)**2``."""
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"mse: prediction shape {pred.shape} != target shape {target.shape}")
    diff = pred.data - target
    n = diff.size

    def back(g):
        _accum(pred, g * 2.0 * diff / n)

    return _result(np.mean(diff * diff), (pred,), back)


# --------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[-2 if b.data.ndim > 1 else 0]:
        raise ValueError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")

    def back(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            _accum(a, _unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            _accum(b, _unbroadcast(gb, b.shape))

    return _result(a.data @ b.data, (a, b), back)


# --------------------------------------------------------------------- shaping

def reshape(a: Tensor, shape) -> Tensor:
    return _result(a.data.reshape(shape), (a,), lambda g: _accum(a, g.reshape(a.shape)))


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return _result(np.transpose(a.data, axes), (a,), lambda g: _accum(a, np.transpose(g, inv)))


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        for t, piece in zip(tensors, np.split(g, cuts, axis=axis)):
            _accum(t, piece)

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), back)


def getitem(a: Tensor, idx) -> Tensor:
    def back(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            if _fancy(idx):
                np.add.at(full, idx, g)
            else:
                full[idx] = g
            _accum(a, full)

    return _result(a.data[idx], (a,), back)


def _fancy(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


# ------------------------------------------------------------------ fused ops

def dilated_causal_conv1d(x, weight: Tensor, bias: Tensor, dilation: int) -> Tensor:
    """Valid causal convolution over the last axis.

    ``x`` is ``[batch, channels, time]``, ``weight`` is
    ``[filters, channels, kernel]``. Output position ``j`` sits at input time
    ``t = j + dilation*(kernel-1)`` and sees exactly inputs
    ``t, t-dilation, ..., t-dilation*(kernel-1)``; tap ``k`` of the kernel
    multiplies input ``t - dilation*(kernel-1-k)``.
    Result is ``[batch, filters, time - dilation*(kernel-1)]``.
    """
    x = as_tensor(x)
    B, C, T = x.shape
    F, C2, K = weight.shape
    if C != C2:
        raise ValueError(f"conv: input has {C} channels, weight expects {C2}")
    span = dilation * (K - 1)
    L = T - span
    if L <= 0:
        raise ValueError(f"conv: sequence length {T} too short for receptive span {span + 1}")
    # cols[b, j, k, c] = x[b, c, j + k*dilation]
    cols = np.stack([x.data[:, :, k * dilation:k * dilation + L] for k in range(K)], axis=1)
    cols = np.transpose(cols, (0, 3, 1, 2)).reshape(B, L, K * C)
    w2 = np.transpose(weight.data, (2, 1, 0)).reshape(K * C, F)   # [(k, c), f]
    out = cols @ w2 + bias.data                                   # [B, L, F]

    def back(g):
        gt = np.transpose(g, (0, 2, 1))                           # [B, L, F]
        if weight.requires_grad:
            gw2 = cols.reshape(B * L, K * C).T @ gt.reshape(B * L, F)
            _accum(weight, np.transpose(gw2.reshape(K, C, F), (2, 1, 0)))
        if bias.requires_grad:
            _accum(bias, gt.sum(axis=(0, 1)))
        if x.requires_grad:
            gcols = (gt @ w2.T).reshape(B, L, K, C)
            gx = np.zeros_like(x.data)
            for k in range(K):
                gx[:, :, k * dilation:k * dilation + L] += np.transpose(gcols[:, :, k, :], (0, 2, 1))
            _accum(x, gx)

    return _result(np.transpose(out, (0, 2, 1)), (x, weight, bias), back)


def lstm_cell(x, state: Tensor, w_in: Tensor, w_rec: Tensor, bias: Tensor) -> Tensor:
    """One LSTM step on a packed state ``[h | c]`` of shape ``[batch, 2*hidden]``.

    Gate pre-activations ``x @ w_in + h @ w_rec + bias`` are laid out as
    ``[input, forget, cell, output]`` blocks of width ``hidden``.
    Returns the new packed state.
    """
    x = as_tensor(x)
    H = w_rec.shape[0]
    h, c = state.data[:, :H], state.data[:, H:]
    z = x.data @ w_in.data + h @ w_rec.data + bias.data
    i = sigmoid_np(z[:, :H])
    f = sigmoid_np(z[:, H:2 * H])
    gg = np.tanh(z[:, 2 * H:3 * H])
    o = sigmoid_np(z[:, 3 * H:])
    c_new = f * c + i * gg
    tc = np.tanh(c_new)
    h_new = o * tc

    def back(g):
        gh, gc = g[:, :H], g[:, H:]
        do = gh * tc
        dc = gc + gh * o * (1 - tc * tc)
        di = dc * gg
        df = dc * c
        dg = dc * i
        dz = np.concatenate([
            di * i * (1 - i), df * f * (1 - f), dg * (1 - gg * gg), do * o * (1 - o),
        ], axis=1)
        if state.requires_grad:
            _accum(state, np.concatenate([dz @ w_rec.data.T, dc * f], axis=1))
        if x.requires_grad:
            _accum(x, dz @ w_in.data.T)
        if w_in.requires_grad:
            _accum(w_in, x.data.T @ dz)
        if w_rec.requires_grad:
            _accum(w_rec, h.T @ dz)
        if bias.requires_grad:
            _accum(bias, dz.sum(axis=0))

    return _result(np.concatenate([h_new, c_new], axis=1), (x, state, w_in, w_rec, bias), back)
