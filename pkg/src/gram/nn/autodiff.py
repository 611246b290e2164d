"""Minimal reverse-mode autodiff over numpy arrays.

A Tensor wraps an ndarray plus a backward closure; backward() topologically
sorts the tape and accumulates gradients into the requires_grad leaves.
Float64 throughout: desk-scale models are small enough that precision is
cheaper than debugging.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

from .. import _kernels

_grad_enabled = True


@contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    def backward(self, retain_graph=False):
        if self.data.size != 1:
            raise ValueError(f"backward needs a scalar, got shape {self.data.shape}")
        if not math.isfinite(float(self.data)):
            raise FloatingPointError("backward on non-finite loss")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if not retain_graph:
                    node._backward = None
                    node._parents = ()

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return mul(self, 1.0 / other)
        return mul(self, pow_const(other, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_idx(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t: Tensor, g):
    g = np.asarray(g, dtype=np.float64)
    t.grad = g if t.grad is None else t.grad + g


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data @ b.data

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        _accumulate(a, _unbroadcast(ga, a.shape))
        _accumulate(b, _unbroadcast(gb, b.shape))

    return _make(out_data, (a, b), backward)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    inverse = np.argsort(axes)

    def backward(g):
        _accumulate(a, g.transpose(inverse))

    return _make(a.data.transpose(axes), (a,), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape

    def backward(g):
        _accumulate(a, g.reshape(old))

    return _make(a.data.reshape(shape), (a,), backward)


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))

    return _make(np.broadcast_to(a.data, shape).copy(), (a,), backward)


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _accumulate(t, piece)

    return _make(np.concatenate([t.data for t in tensors], axis=axis),
                 tuple(tensors), backward)


def slice_idx(a, key) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.data)
        full[key] = g
        _accumulate(a, full)

    return _make(a.data[key].copy(), (a,), backward)


def pad_axis(a, before, after, axis) -> Tensor:
    a = as_tensor(a)
    pads = [(0, 0)] * a.ndim
    pads[axis] = (before, after)
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(before, before + a.shape[axis])
    sl = tuple(sl)

    def backward(g):
        _accumulate(a, g[sl])

    return _make(np.pad(a.data, pads), (a,), backward)


def gather(a, index, axis) -> Tensor:
    """take_along_axis with gradient (scatter-add adjoint)."""
    a = as_tensor(a)
    index = np.asarray(index)

    def backward(g):
        full = np.zeros_like(a.data)
        grid = list(np.ogrid[tuple(slice(0, s) for s in g.shape)])
        grid[axis] = np.broadcast_to(index, g.shape)
        np.add.at(full, tuple(grid), g)
        _accumulate(a, full)

    return _make(np.take_along_axis(a.data, index, axis=axis), (a,), backward)


def scatter(values, index, axis, size) -> Tensor:
    """Adjoint of gather: place values into a zero array of ``size`` along axis."""
    values = as_tensor(values)
    index = np.asarray(index)
    shape = list(values.shape)
    shape[axis] = size
    out_data = np.zeros(shape, dtype=values.data.dtype)
    grid = list(np.ogrid[tuple(slice(0, s) for s in values.shape)])
    grid[axis] = np.broadcast_to(index, values.shape)
    np.add.at(out_data, tuple(grid), values.data)

    def backward(g):
        _accumulate(values, np.take_along_axis(g, np.broadcast_to(index, values.shape),
                                               axis=axis))

    return _make(out_data, (values,), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g):
        _accumulate(a, g * out_data)

    return _make(out_data, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, g / a.data)

    return _make(np.log(a.data), (a,), backward)


def pow_const(a, exponent: float) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, g * exponent * a.data ** (exponent - 1.0))

    return _make(a.data**exponent, (a,), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.data))),
                        np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))

    def backward(g):
        _accumulate(a, g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), backward)


def silu(a) -> Tensor:
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-np.clip(a.data, -500, 500)))
    out_data = a.data * s

    def backward(g):
        _accumulate(a, g * (s + a.data * s * (1.0 - s)))

    return _make(out_data, (a,), backward)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a) -> Tensor:
    """tanh-approximation GELU."""
    a = as_tensor(a)
    x = a.data
    inner = x * x
    inner *= 0.044715
    inner += 1.0
    inner *= x
    inner *= _GELU_C
    t = np.tanh(inner, out=inner)
    out_data = 1.0 + t
    out_data *= x
    out_data *= 0.5

    def backward(g):
        dinner = x * x
        dinner *= 3 * 0.044715
        dinner += 1.0
        dinner *= _GELU_C
        dinner *= 1.0 - t * t
        dinner *= x
        dinner += 1.0 + t
        dinner *= 0.5
        dinner *= g
        _accumulate(a, dinner)

    return _make(out_data, (a,), backward)


def softplus(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.maximum(a.data, 0.0) + np.log1p(np.exp(-np.abs(a.data)))

    def backward(g):
        s = 1.0 / (1.0 + np.exp(-np.clip(a.data, -500, 500)))
        _accumulate(a, g * s)

    return _make(out_data, (a,), backward)


def softmax(a) -> Tensor:
    """Softmax over the last axis."""
    a = as_tensor(a)
    out_data = a.data - a.data.max(axis=-1, keepdims=True)
    np.exp(out_data, out=out_data)
    out_data /= out_data.sum(axis=-1, keepdims=True)

    def backward(g):
        da = g - (g * out_data).sum(axis=-1, keepdims=True)
        da *= out_data
        _accumulate(a, da)

    return _make(out_data, (a,), backward)


def log_softmax(a) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out_data = shifted - lse

    def backward(g):
        _accumulate(a, g - np.exp(out_data) * g.sum(axis=-1, keepdims=True))

    return _make(out_data, (a,), backward)


def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape).copy())

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.data.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.shape[i] for i in axis]))
    else:
        count = a.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def layer_norm(a, gamma, beta, eps=1e-5) -> Tensor:
    """Layer normalization over the last axis with affine parameters."""
    a, gamma, beta = as_tensor(a), as_tensor(gamma), as_tensor(beta)
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    var = (centered**2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out_data = xhat * gamma.data + beta.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        _accumulate(gamma, (g * xhat).sum(axis=lead))
        _accumulate(beta, g.sum(axis=lead))
        dxhat = g * gamma.data
        da = inv_std * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        _accumulate(a, da)

    return _make(out_data, (a, gamma, beta), backward)


def selective_scan(u, delta, A, B, C, exact_discretization=False) -> Tensor:
    """Diagonal selective state-space scan as a differentiable primitive.

    Shapes: u, delta (batch, T, d); A (d, n); B, C (batch, T, n).
    Forward/backward run on the compiled kernel backend when available.
    """
    u, delta, A, B, C = map(as_tensor, (u, delta, A, B, C))
    args = tuple(np.ascontiguousarray(t.data) for t in (u, delta, A, B, C))
    y, hs = _kernels.selective_scan_fwd(*args, exact_discretization)

    def backward(g):
        du, ddelta, dA, dB, dC = _kernels.selective_scan_bwd(
            np.ascontiguousarray(g), *args, hs, exact_discretization)
        for t, grad in zip((u, delta, A, B, C), (du, ddelta, dA, dB, dC)):
            _accumulate(t, grad)

    return _make(y, (u, delta, A, B, C), backward)
