"""Small reverse-mode automatic differentiation engine on float64 numpy arrays.

Supports exactly the operations the planners need: broadcasting arithmetic,
batched matmul, tanh/exp/log/sqrt, reductions, slicing, concatenation, and
numerically stable softmax/logsumexp built on a detached max shift (the shift
is constant per call, so gradients stay exact). Gradients accumulate in
topological order; everything is deterministic.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


class Var:
    """Node in the computation graph holding a float64 array."""

    __slots__ = ("value", "grad", "parents", "_backward", "name")

    def __init__(self, value, parents: tuple = (), backward: Callable | None = None,
                 name: str = ""):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def detach(self) -> "Var":
        return Var(self.value.copy())

    def backward(self) -> None:
        """Accumulate gradients of this (scalar) node into the graph."""
        if self.value.size != 1:
            raise ValueError(f"backward needs a scalar, got shape {self.shape}")
        order: list[Var] = []
        seen: set[int] = set()
        stack: list[tuple[Var, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node.parents:
                stack.append((parent, False))
        for node in order:
            node.grad = np.zeros_like(node.value)
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # Arithmetic operators build graph nodes.
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
        other = asvar(other)
        return mul(self, powc(other, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def __repr__(self):
        return f"Var(shape={self.shape}, name={self.name!r})"


def asvar(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Var:
    a, b = asvar(a), asvar(b)
    out = Var(a.value + b.value, parents=(a, b))

    def backward(g):
        a.grad += _unbroadcast(g, a.shape)
        b.grad += _unbroadcast(g, b.shape)

    out._backward = backward
    return out


def mul(a, b) -> Var:
    a, b = asvar(a), asvar(b)
    out = Var(a.value * b.value, parents=(a, b))

    def backward(g):
        a.grad += _unbroadcast(g * b.value, a.shape)
        b.grad += _unbroadcast(g * a.value, b.shape)

    out._backward = backward
    return out


def matmul(a, b) -> Var:
    a, b = asvar(a), asvar(b)
    out = Var(a.value @ b.value, parents=(a, b))

    def backward(g):
        a.grad += _unbroadcast(g @ np.swapaxes(b.value, -1, -2), a.shape)
        b.grad += _unbroadcast(np.swapaxes(a.value, -1, -2) @ g, b.shape)

    out._backward = backward
    return out


def powc(a, exponent: float) -> Var:
    a = asvar(a)
    out = Var(a.value ** exponent, parents=(a,))

    def backward(g):
        a.grad += g * exponent * a.value ** (exponent - 1.0)

    out._backward = backward
    return out


def sqrt(a) -> Var:
    return powc(a, 0.5)


def square(a) -> Var:
    return powc(a, 2.0)


def exp(a) -> Var:
    a = asvar(a)
    out = Var(np.exp(a.value), parents=(a,))

    def backward(g):
        a.grad += g * out.value

    out._backward = backward
    return out


def log(a) -> Var:
    a = asvar(a)
    out = Var(np.log(a.value), parents=(a,))

    def backward(g):
        a.grad += g / a.value

    out._backward = backward
    return out


def tanh(a) -> Var:
    a = asvar(a)
    out = Var(np.tanh(a.value), parents=(a,))

    def backward(g):
        a.grad += g * (1.0 - out.value ** 2)

    out._backward = backward
    return out


def vsum(a, axis=None, keepdims: bool = False) -> Var:
    a = asvar(a)
    out = Var(a.value.sum(axis=axis, keepdims=keepdims), parents=(a,))

    def backward(g):
        if axis is None:
            a.grad += np.broadcast_to(g, a.shape)
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        a.grad += np.broadcast_to(g, a.shape)

    out._backward = backward
    return out


def vmean(a, axis=None, keepdims: bool = False) -> Var:
    a = asvar(a)
    if axis is None:
        n = a.value.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(vsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape) -> Var:
    a = asvar(a)
    out = Var(a.value.reshape(shape), parents=(a,))

    def backward(g):
        a.grad += g.reshape(a.shape)

    out._backward = backward
    return out


def transpose(a, axes) -> Var:
    a = asvar(a)
    out = Var(a.value.transpose(axes), parents=(a,))
    inverse = np.argsort(axes)

    def backward(g):
        a.grad += g.transpose(inverse)

    out._backward = backward
    return out


def getitem(a, idx) -> Var:
    """Basic indexing only (ints and slices); no duplicated fancy indices."""
    a = asvar(a)
    out = Var(a.value[idx], parents=(a,))

    def backward(g):
        buf = np.zeros_like(a.value)
        buf[idx] += g
        a.grad += buf

    out._backward = backward
    return out


def concatenate(parts: list, axis: int) -> Var:
    parts = [asvar(p) for p in parts]
    out = Var(np.concatenate([p.value for p in parts], axis=axis), parents=tuple(parts))
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            p.grad += g[tuple(idx)]

    out._backward = backward
    return out


def softmax(a, axis: int = -1) -> Var:
    """Row softmax; the max shift is detached, which leaves gradients exact."""
    a = asvar(a)
    shift = a.value.max(axis=axis, keepdims=True)
    e = exp(add(a, -shift))
    return mul(e, powc(vsum(e, axis=axis, keepdims=True), -1.0))


def logsumexp(a, axis: int = -1, keepdims: bool = False) -> Var:
    a = asvar(a)
    shift = a.value.max(axis=axis, keepdims=True)
    lse = log(vsum(exp(add(a, -shift)), axis=axis, keepdims=True))
    out = add(lse, shift)
    if not keepdims:
        ax = axis % a.value.ndim
        out = reshape(out, tuple(n for i, n in enumerate(out.shape) if i != ax))
    return out


def affine(x: Var, weight: Var, bias: Var) -> Var:
    return add(matmul(x, weight), bias)


def layer_norm(x: Var, gain: Var, bias: Var, eps: float = 1e-5) -> Var:
    mu = vmean(x, axis=-1, keepdims=True)
    centered = add(x, mul(mu, -1.0))
    var = vmean(square(centered), axis=-1, keepdims=True)
    normed = mul(centered, powc(add(var, eps), -0.5))
    return add(mul(normed, gain), bias)


def l2_normalize(x: Var, axis: int = -1, eps: float = 0.0) -> Var:
    norm = sqrt(add(vsum(square(x), axis=axis, keepdims=True), eps))
    return mul(x, powc(norm, -1.0))
