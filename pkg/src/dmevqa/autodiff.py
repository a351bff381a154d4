"""Reverse-mode automatic differentiation over dense numpy arrays.

Each op returns a Tensor carrying a closure that routes the output gradient
back to its parents; backward() replays the closures in reverse topological
order. Only nodes that transitively require gradients are recorded, so
eval-mode forward passes build no graph. Double precision is used by the
finite-difference suites; training runs in float32.
"""

import numpy as np

from . import kernels
from .errors import ShapeError, UsageError


def _unbroadcast(g, shape):
    """Sum g down to `shape`, undoing numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcastable(a, b):
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(f"cannot broadcast {a.data.shape} with {b.data.shape}") from None


class Tensor:
    """Dense array node in a recorded computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev")

    def __init__(self, data, requires_grad=False):
        if not isinstance(data, np.ndarray):
            data = np.asarray(data, dtype=np.float64)
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._prev = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def detach(self):
        """Same values, severed from the recorded graph."""
        return Tensor(self.data)

    def _accum(self, g):
        if self.grad is None:
            if isinstance(g, np.ndarray) and g.shape == self.data.shape and g.dtype == self.data.dtype:
                self.grad = g.copy()
            else:
                grad = np.zeros_like(self.data)
                grad += g
                self.grad = grad
        else:
            self.grad += g

    def backward(self):
        """Populate .grad on every reachable gradient-tracked leaf.

        The output must be scalar and must depend on at least one tensor
        created with requires_grad=True. Grads of intermediate (op-produced)
        nodes are freed as soon as they have been propagated; only leaves
        keep .grad afterwards.
        """
        if self.data.size != 1:
            raise UsageError(f"backward() needs a scalar output, got shape {self.shape}")
        if not self.requires_grad:
            raise UsageError("output was not recorded: no input requires gradients")
        order, done, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in done:
                continue
            done.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                if id(p) not in done:
                    stack.append((p, False))
        self._accum(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)
                node.grad = None

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)

    def __add__(self, other):
        return add(self, _wrap(other, self.dtype))

    def __radd__(self, other):
        return add(_wrap(other, self.dtype), self)

    def __sub__(self, other):
        return add(self, neg(_wrap(other, self.dtype)))

    def __rsub__(self, other):
        return add(_wrap(other, self.dtype), neg(self))

    def __mul__(self, other):
        return mul(self, _wrap(other, self.dtype))

    def __rmul__(self, other):
        return mul(_wrap(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise UsageError("division only by plain scalars")
        return mul(self, _wrap(1.0 / other, self.dtype))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _wrap(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _result(data, parents):
    out = Tensor(data)
    prev = tuple(p for p in parents if p.requires_grad)
    if prev:
        out.requires_grad = True
        out._prev = prev
    return out


def gradient(output, parameters):
    """Reverse-mode gradients of a scalar Tensor for each parameter leaf.

    Parameters the output does not depend on get zero gradients.
    """
    output.backward()
    return [np.zeros_like(p.data) if p.grad is None else p.grad for p in parameters]


def add(a, b):
    _broadcastable(a, b)
    out = _result(a.data + b.data, (a, b))
    if out.requires_grad:
        def _back(go):
            if a.requires_grad:
                a._accum(_unbroadcast(go, a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(go, b.data.shape))
        out._backward = _back
    return out


def mul(a, b):
    _broadcastable(a, b)
    out = _result(a.data * b.data, (a, b))
    if out.requires_grad:
        def _back(go):
            if a.requires_grad:
                a._accum(_unbroadcast(go * b.data, a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(go * a.data, b.data.shape))
        out._backward = _back
    return out


def neg(a):
    out = _result(-a.data, (a,))
    if out.requires_grad:
        def _back(go):
            a._accum(-go)
        out._backward = _back
    return out


def matmul(a, b):
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs ndim >= 2, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.data.shape} vs {b.data.shape}")
    out = _result(a.data @ b.data, (a, b))
    if out.requires_grad:
        def _back(go):
            if a.requires_grad:
                a._accum(_unbroadcast(go @ np.swapaxes(b.data, -1, -2), a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(np.swapaxes(a.data, -1, -2) @ go, b.data.shape))
        out._backward = _back
    return out


def relu(a):
    out = _result(np.maximum(a.data, 0), (a,))
    if out.requires_grad:
        mask = a.data > 0
        def _back(go):
            a._accum(go * mask)
        out._backward = _back
    return out


def hinge(a):
    """max(0, a) as used inside the consistency penalty; subgradient at 0 is 0."""
    out = _result(np.maximum(a.data, 0), (a,))
    if out.requires_grad:
        mask = a.data > 0
        def _back(go):
            a._accum(go * mask)
        out._backward = _back
    return out


def tanh(a):
    t = np.tanh(a.data)
    out = _result(t, (a,))
    if out.requires_grad:
        def _back(go):
            a._accum(go * (1.0 - t * t))
        out._backward = _back
    return out


def sigmoid(a):
    x = a.data
    e = np.exp(-np.abs(x))
    s = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    out = _result(s, (a,))
    if out.requires_grad:
        def _back(go):
            a._accum(go * s * (1.0 - s))
        out._backward = _back
    return out


def softmax(a, axis=-1):
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    out = _result(s, (a,))
    if out.requires_grad:
        def _back(go):
            a._accum(s * (go - (go * s).sum(axis=axis, keepdims=True)))
        out._backward = _back
    return out


def log(a):
    out = _result(np.log(a.data), (a,))
    if out.requires_grad:
        def _back(go):
            a._accum(go / a.data)
        out._backward = _back
    return out


def clip_min(a, lo):
    out = _result(np.maximum(a.data, lo), (a,))
    if out.requires_grad:
        mask = a.data > lo
        def _back(go):
            a._accum(go * mask)
        out._backward = _back
    return out


def sum_(a, axis=None, keepdims=False):
    out = _result(a.data.sum(axis=axis, keepdims=keepdims), (a,))
    if out.requires_grad:
        def _back(go):
            if axis is not None and not keepdims:
                go = np.expand_dims(go, axis)
            a._accum(np.broadcast_to(go, a.data.shape))
        out._backward = _back
    return out


def mean(a, axis=None, keepdims=False):
    if axis is None:
        n = a.data.size
    else:
        ax = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for i in ax:
            n *= a.data.shape[i]
    return mul(sum_(a, axis, keepdims), _wrap(1.0 / n, a.dtype))


def reshape(a, shape):
    out = _result(a.data.reshape(shape), (a,))
    if out.requires_grad:
        def _back(go):
            a._accum(go.reshape(a.data.shape))
        out._backward = _back
    return out


def transpose(a, axes):
    out = _result(a.data.transpose(axes), (a,))
    if out.requires_grad:
        inv = np.argsort(axes)
        def _back(go):
            a._accum(go.transpose(inv))
        out._backward = _back
    return out


def concat(tensors, axis):
    base = tensors[0].data.shape
    for t in tensors[1:]:
        s = t.data.shape
        if len(s) != len(base) or any(i != axis and s[i] != base[i] for i in range(len(s))):
            raise ShapeError(f"concat on axis {axis}: {base} vs {s}")
    out = _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]
        def _back(go):
            parts = np.split(go, splits, axis=axis)
            for t, g in zip(tensors, parts):
                if t.requires_grad:
                    t._accum(g)
        out._backward = _back
    return out


def pick(a, index):
    """Select a[i, index[i]] for each row i of a 2-D tensor."""
    if a.data.ndim != 2:
        raise ShapeError(f"pick needs a 2-D tensor, got {a.data.shape}")
    index = np.asarray(index)
    if index.min() < 0 or index.max() >= a.data.shape[1]:
        raise UsageError(f"pick index out of range for width {a.data.shape[1]}")
    rows = np.arange(a.data.shape[0])
    out = _result(a.data[rows, index], (a,))
    if out.requires_grad:
        def _back(go):
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            np.add.at(a.grad, (rows, index), go)
        out._backward = _back
    return out


def index_rows(a, index):
    """Gather along axis 0 by integer index; scatter-add on the way back."""
    index = np.asarray(index)
    if index.size and (index.min() < 0 or index.max() >= a.data.shape[0]):
        raise UsageError(f"index out of range for axis of length {a.data.shape[0]}")
    out = _result(a.data[index], (a,))
    if out.requires_grad:
        def _back(go):
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            np.add.at(a.grad, index, go)
        out._backward = _back
    return out


def embedding(weight, index):
    """Token-embedding lookup: rows of a (V, D) table by token id."""
    return index_rows(weight, index)


def conv2d(x, w, b, stride=1, padding=0):
    """2-D correlation of NCHW input x with (Cout,Cin,K1,K2) filters w plus bias b."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d needs 4-D tensors, got {x.data.shape} and {w.data.shape}")
    if x.data.shape[1] != w.data.shape[1]:
        raise ShapeError(f"conv2d channel mismatch: {x.data.shape} vs {w.data.shape}")
    if padding:
        x_pad = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        x_pad = np.ascontiguousarray(x.data)
    out = _result(kernels.conv2d_forward(x_pad, w.data, b.data, stride), (x, w, b))
    if out.requires_grad:
        def _back(go):
            g = np.ascontiguousarray(go)
            if x.requires_grad:
                gx = kernels.conv2d_input_grad(g, w.data, stride, x_pad.shape)
                if padding:
                    gx = gx[:, :, padding:-padding, padding:-padding]
                x._accum(gx)
            if w.requires_grad or b.requires_grad:
                gw, gb = kernels.conv2d_weight_grad(g, x_pad, stride, w.data.shape)
                if w.requires_grad:
                    w._accum(gw)
                if b.requires_grad:
                    b._accum(gb)
        out._backward = _back
    return out


def maxpool2d(x, k, stride=None):
    stride = k if stride is None else stride
    data, idx = kernels.maxpool_forward(np.ascontiguousarray(x.data), k, stride)
    out = _result(data, (x,))
    if out.requires_grad:
        def _back(go):
            g = np.ascontiguousarray(go)
            x._accum(kernels.maxpool_backward(g, idx, k, stride, x.data.shape))
        out._backward = _back
    return out


def dropout(x, rate, rng, train):
    """Inverted dropout; identity when not training or rate is 0."""
    if not train or rate == 0.0:
        return x
    mask = (rng.random(x.data.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    out = _result(x.data * mask, (x,))
    if out.requires_grad:
        def _back(go):
            x._accum(go * mask)
        out._backward = _back
    return out


def spatial_weighted_sum(v, maps):
    """Weighted sum of v (B,C,S) by per-glimpse spatial maps (B,G,S) -> (B,G,C)."""
    return matmul(maps, transpose(v, (0, 2, 1)))
