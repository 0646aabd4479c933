"""Minimal reverse-mode automatic differentiation over numpy arrays.

Define-by-run tape: every operation returns a new :class:`Tensor` holding
its value, its parents, and a vector-Jacobian closure. ``backward`` walks
the tape in reverse topological order and accumulates gradients into the
leaves. Reductions use fixed numpy association order, so gradients are
bit-reproducible for identical inputs.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("value", "grad", "parents", "vjps", "requires_grad")

    def __init__(self, value, parents=(), vjps=(), requires_grad=False):
        self.value = np.asarray(value)
        self.grad = None
        self.parents = parents
        self.vjps = vjps
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def backward(self, seed=None):
        """Accumulate gradients of this (scalar) tensor into the tape leaves."""
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        if seed is None:
            seed = np.ones_like(self.value)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(seed, dtype=self.value.dtype)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node.parents:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, vjp in zip(node.parents, node.vjps):
                if not parent.requires_grad:
                    continue
                pg = vjp(g)
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                elif parent.parents:
                    grads[id(parent)] = pg
                else:
                    parent.grad = pg if parent.grad is None else parent.grad + pg


def parameter(value) -> Tensor:
    return Tensor(np.asarray(value), requires_grad=True)


def _wrap(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.value.dtype if like is not None else np.float64
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    a, b = _wrap(a, b if isinstance(b, Tensor) else None), _wrap(b, a if isinstance(a, Tensor) else None)
    return Tensor(
        a.value + b.value,
        parents=(a, b),
        vjps=(lambda g: _unbroadcast(g, a.shape), lambda g: _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _wrap(a, b if isinstance(b, Tensor) else None), _wrap(b, a if isinstance(a, Tensor) else None)
    return Tensor(
        a.value - b.value,
        parents=(a, b),
        vjps=(lambda g: _unbroadcast(g, a.shape), lambda g: _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _wrap(a, b if isinstance(b, Tensor) else None), _wrap(b, a if isinstance(a, Tensor) else None)
    return Tensor(
        a.value * b.value,
        parents=(a, b),
        vjps=(
            lambda g: _unbroadcast(g * b.value, a.shape),
            lambda g: _unbroadcast(g * a.value, b.shape),
        ),
    )


def div(a, b) -> Tensor:
    a, b = _wrap(a, b if isinstance(b, Tensor) else None), _wrap(b, a if isinstance(a, Tensor) else None)
    return Tensor(
        a.value / b.value,
        parents=(a, b),
        vjps=(
            lambda g: _unbroadcast(g / b.value, a.shape),
            lambda g: _unbroadcast(-g * a.value / (b.value * b.value), b.shape),
        ),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(
        a.value @ b.value,
        parents=(a, b),
        vjps=(lambda g: g @ b.value.T, lambda g: a.value.T @ g),
    )


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return Tensor(np.where(mask, a.value, 0.0), parents=(a,), vjps=(lambda g: g * mask,))


def exp(a: Tensor) -> Tensor:
    out_val = np.exp(a.value)
    return Tensor(out_val, parents=(a,), vjps=(lambda g: g * out_val,))


def log(a: Tensor) -> Tensor:
    return Tensor(np.log(a.value), parents=(a,), vjps=(lambda g: g / a.value,))


def sqrt(a: Tensor) -> Tensor:
    out_val = np.sqrt(a.value)
    return Tensor(out_val, parents=(a,), vjps=(lambda g: g * 0.5 / out_val,))


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, a.shape).astype(a.value.dtype)
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, a.shape).astype(a.value.dtype)

    return Tensor(a.value.sum(axis=axis, keepdims=keepdims), parents=(a,), vjps=(vjp,))


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return out

    return Tensor(a.value[idx], parents=(a,), vjps=(vjp,))


def segment_sum(a: Tensor, idx: np.ndarray, n_segments: int) -> Tensor:
    out_val = np.zeros((n_segments,) + a.value.shape[1:], dtype=a.value.dtype)
    np.add.at(out_val, idx, a.value)
    return Tensor(out_val, parents=(a,), vjps=(lambda g: g[idx],))
