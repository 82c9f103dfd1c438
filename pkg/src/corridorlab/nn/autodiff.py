"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray plus the closure that routes its output gradient
to its parents; backward() walks the graph in reverse topological order.
Training graphs run in float32; every op inherits the dtype of its inputs,
so the same code re-evaluates in float64 for finite-difference checks.
Reductions (sum, mean, logsumexp and the broadcast-collapse in backward)
accumulate in float64 regardless of graph dtype.
"""

from __future__ import annotations

import numpy as np


def _as_array(x, dtype):
    a = np.asarray(x)
    if a.dtype != dtype:
        a = a.astype(dtype)
    return a


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    g = grad.astype(np.float64)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.astype(grad.dtype).reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "parents", "_backward", "requires_grad")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, dtype=None):
        if dtype is None:
            d = np.asarray(data).dtype
            dtype = d if d in (np.float32, np.float64) else np.float32
        self.data = _as_array(data, dtype)
        self.grad = None
        self.parents = parents
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    # -- graph construction helpers ------------------------------------

    def _lift(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other):
        o = self._lift(other)
        out = Tensor(self.data + o.data, parents=(self, o))
        out._backward = lambda g: (_unbroadcast(g, self.shape), _unbroadcast(g, o.shape))
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, parents=(self,))
        out._backward = lambda g: (-g,)
        return out

    def __sub__(self, other):
        o = self._lift(other)
        out = Tensor(self.data - o.data, parents=(self, o))
        out._backward = lambda g: (_unbroadcast(g, self.shape), _unbroadcast(-g, o.shape))
        return out

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        o = self._lift(other)
        out = Tensor(self.data * o.data, parents=(self, o))
        out._backward = lambda g: (_unbroadcast(g * o.data, self.shape), _unbroadcast(g * self.data, o.shape))
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        out = Tensor(self.data / o.data, parents=(self, o))

        def bwd(g):
            return (
                _unbroadcast(g / o.data, self.shape),
                _unbroadcast(-g * self.data / (o.data * o.data), o.shape),
            )

        out._backward = bwd
        return out

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __matmul__(self, other):
        o = self._lift(other)
        if self.data.ndim != 2 or o.data.ndim != 2:
            raise ValueError("matmul is 2-D only; batch vectors as (1, n)")
        out = Tensor(self.data @ o.data, parents=(self, o))

        def bwd(g):
            ga = g @ o.data.T
            gb = self.data.T @ g
            return ga, gb

        out._backward = bwd
        return out

    def __getitem__(self, idx):
        out = Tensor(self.data[idx], parents=(self,))

        def bwd(g):
            full = np.zeros_like(self.data)
            full[idx] = g
            return (full,)

        out._backward = bwd
        return out

    def reshape(self, *shape):
        out = Tensor(self.data.reshape(*shape), parents=(self,))
        out._backward = lambda g: (g.reshape(self.data.shape),)
        return out

    # -- elementwise nonlinearities ------------------------------------

    def tanh(self):
        y = np.tanh(self.data)
        out = Tensor(y, parents=(self,))
        out._backward = lambda g: (g * (1.0 - y * y),)
        return out

    def sigmoid(self):
        y = 1.0 / (1.0 + np.exp(-self.data))
        out = Tensor(y, parents=(self,))
        out._backward = lambda g: (g * y * (1.0 - y),)
        return out

    def exp(self):
        y = np.exp(self.data)
        out = Tensor(y, parents=(self,))
        out._backward = lambda g: (g * y,)
        return out

    def log(self):
        out = Tensor(np.log(self.data), parents=(self,))
        out._backward = lambda g: (g / self.data,)
        return out

    def softplus(self):
        # log(1 + e^x), computed stably; derivative is sigmoid(x)
        y = np.logaddexp(0.0, self.data).astype(self.dtype)
        out = Tensor(y, parents=(self,))
        sig = 1.0 / (1.0 + np.exp(-self.data))
        out._backward = lambda g: (g * sig,)
        return out

    def square(self):
        out = Tensor(self.data * self.data, parents=(self,))
        out._backward = lambda g: (g * 2.0 * self.data,)
        return out

    # -- reductions (float64 accumulation) ------------------------------

    def sum(self, axis=None, keepdims=False):
        y = self.data.sum(axis=axis, dtype=np.float64, keepdims=keepdims).astype(self.dtype)
        out = Tensor(y, parents=(self,))

        def bwd(g):
            if axis is None:
                return (np.broadcast_to(g, self.shape).astype(self.dtype),)
            ge = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(ge, self.shape).astype(self.dtype),)

        out._backward = bwd
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def logsumexp(self, axis: int):
        m = self.data.max(axis=axis, keepdims=True)
        e = np.exp((self.data - m).astype(np.float64))
        s = e.sum(axis=axis, keepdims=True)
        y = (m + np.log(s).astype(self.dtype)).squeeze(axis)
        out = Tensor(y.astype(self.dtype), parents=(self,))
        soft = (e / s).astype(self.dtype)

        def bwd(g):
            return (np.expand_dims(g, axis) * soft,)

        out._backward = bwd
        return out

    # -- pairwise extrema / clipping ------------------------------------

    def minimum(self, other):
        o = self._lift(other)
        take_self = self.data <= o.data
        out = Tensor(np.where(take_self, self.data, o.data), parents=(self, o))
        out._backward = lambda g: (
            _unbroadcast(np.where(take_self, g, 0.0).astype(g.dtype), self.shape),
            _unbroadcast(np.where(take_self, 0.0, g).astype(g.dtype), o.shape),
        )
        return out

    def maximum(self, other):
        o = self._lift(other)
        take_self = self.data >= o.data
        out = Tensor(np.where(take_self, self.data, o.data), parents=(self, o))
        out._backward = lambda g: (
            _unbroadcast(np.where(take_self, g, 0.0).astype(g.dtype), self.shape),
            _unbroadcast(np.where(take_self, 0.0, g).astype(g.dtype), o.shape),
        )
        return out

    def clip(self, lo: float, hi: float):
        inside = (self.data >= lo) & (self.data <= hi)
        out = Tensor(np.clip(self.data, lo, hi), parents=(self,))
        out._backward = lambda g: (np.where(inside, g, 0.0).astype(g.dtype),)
        return out

    # -- backward pass ---------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() starts from a scalar loss")
        topo: list[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if p.requires_grad:
                    stack.append((p, False))

        for n in topo:
            n.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for p, g in zip(node.parents, grads):
                if not p.requires_grad or g is None:
                    continue
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)
                p.grad = p.grad + g.astype(p.dtype)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), parents=tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    out._backward = bwd
    return out


def constant(x, dtype=np.float32) -> Tensor:
    return Tensor(np.asarray(x), dtype=dtype)


def parameter(x, dtype=np.float32) -> Tensor:
    return Tensor(np.asarray(x), requires_grad=True, dtype=dtype)
