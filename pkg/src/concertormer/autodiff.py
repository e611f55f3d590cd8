"""Reverse-mode differentiation over a linear tape.

Ops are free functions that accept `Node`s and/or plain arrays. With no `Node`
argument they just compute values; with one, the result is recorded on that
node's tape. The tape's append order is already topological, so the backward
pass is a single reverse sweep that sums each node's contributions from all
of its consumers.
"""

from __future__ import annotations

import numpy as np

from . import backend


class Tape:
    """Recorded primitive operations plus per-node gradient slots."""

    def __init__(self):
        self.nodes: list[Node] = []

    def leaf(self, value, name: str = "") -> "Node":
        return Node(self, np.asarray(value), parents=(), name=name)

    def constant(self, value) -> "Node":
        # participates in the graph but never receives a gradient
        n = Node(self, np.asarray(value), parents=())
        n.requires_grad = False
        return n


class Node:
    __slots__ = ("tape", "value", "grad", "parents", "vjps", "name", "requires_grad")

    def __init__(self, tape: Tape, value: np.ndarray, parents=(), vjps=(), name: str = ""):
        self.tape = tape
        self.value = value
        self.grad = None
        self.parents = parents
        self.vjps = vjps
        self.name = name
        self.requires_grad = True
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

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

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Node(shape={self.value.shape}, name={self.name!r})"


def value_of(x):
    return x.value if isinstance(x, Node) else np.asarray(x)


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    return None


def _make(tape, value, pairs):
    """pairs: (input, vjp) for every op input; non-Node inputs are dropped."""
    if tape is None:
        return value
    kept = [(x, f) for x, f in pairs if isinstance(x, Node) and x.requires_grad]
    return Node(tape, value,
                parents=tuple(x for x, _ in kept),
                vjps=tuple(f for _, f in kept))


def grad_backward(tape: Tape, loss: Node) -> None:
    """Populate `.grad` on every node reachable from `loss` (reverse sweep)."""
    if loss.value.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.value.shape}")
    for n in tape.nodes:
        n.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(tape.nodes):
        if node.grad is None or not node.parents:
            continue
        g = node.grad
        for parent, vjp in zip(node.parents, node.vjps):
            contrib = vjp(g)
            # never mutated in place, so sharing storage with a view is fine
            parent.grad = contrib if parent.grad is None else parent.grad + contrib


def grad_of(node: Node) -> np.ndarray:
    """Gradient of the last backward pass; zeros when disconnected."""
    return node.grad if node.grad is not None else np.zeros_like(node.value)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.astype(g.dtype, copy=False)


# ---------------------------------------------------------------------------
# elementwise


def add(a, b):
    av, bv = value_of(a), value_of(b)
    out = av + bv
    return _make(_tape_of(a, b), out, [
        (a, lambda g: _unbroadcast(g, av.shape)),
        (b, lambda g: _unbroadcast(g, bv.shape)),
    ])


def sub(a, b):
    av, bv = value_of(a), value_of(b)
    out = av - bv
    return _make(_tape_of(a, b), out, [
        (a, lambda g: _unbroadcast(g, av.shape)),
        (b, lambda g: _unbroadcast(-g, bv.shape)),
    ])


def mul(a, b):
    av, bv = value_of(a), value_of(b)
    out = av * bv
    return _make(_tape_of(a, b), out, [
        (a, lambda g: _unbroadcast(g * bv, av.shape)),
        (b, lambda g: _unbroadcast(g * av, bv.shape)),
    ])


def div(a, b):
    av, bv = value_of(a), value_of(b)
    out = av / bv
    return _make(_tape_of(a, b), out, [
        (a, lambda g: _unbroadcast(g / bv, av.shape)),
        (b, lambda g: _unbroadcast(-g * av / (bv * bv), bv.shape)),
    ])


def neg(a):
    av = value_of(a)
    return _make(_tape_of(a), -av, [(a, lambda g: -g)])


def abs_(a):
    av = value_of(a)
    sign = np.sign(av)
    return _make(_tape_of(a), np.abs(av), [(a, lambda g: g * sign)])


def sqrt_(a):
    av = value_of(a)
    out = np.sqrt(av)
    return _make(_tape_of(a), out, [(a, lambda g: g * (0.5 / out))])


def relu(a):
    av = value_of(a)
    mask = av > 0
    return _make(_tape_of(a), np.where(mask, av, 0), [(a, lambda g: g * mask)])


# ---------------------------------------------------------------------------
# reductions and layout


def sum_(a, axis=None, keepdims: bool = False):
    av = value_of(a)
    out = av.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is None:
            return np.broadcast_to(g, av.shape).astype(av.dtype, copy=False)
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, av.shape).astype(av.dtype, copy=False)

    return _make(_tape_of(a), out, [(a, back)])


def mean(a, axis=None, keepdims: bool = False):
    av = value_of(a)
    count = av.size if axis is None else np.prod([av.shape[i] for i in np.atleast_1d(axis)])
    s = sum_(a, axis=axis, keepdims=keepdims)
    return div(s, np.asarray(count, dtype=av.dtype))


def reshape(a, shape):
    av = value_of(a)
    shape = tuple(shape)
    return _make(_tape_of(a), av.reshape(shape), [(a, lambda g: g.reshape(av.shape))])


def transpose(a, axes):
    av = value_of(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.ascontiguousarray(av.transpose(axes))
    return _make(_tape_of(a), out, [(a, lambda g: np.ascontiguousarray(g.transpose(inv)))])


def concat(parts, axis: int):
    vals = [value_of(p) for p in parts]
    out = np.concatenate(vals, axis=axis)
    offsets = np.cumsum([0] + [v.shape[axis] for v in vals])

    def back_for(i):
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
        sl = tuple(sl)
        return lambda g: np.ascontiguousarray(g[sl])

    return _make(_tape_of(*parts), out, [(p, back_for(i)) for i, p in enumerate(parts)])


def slice_axis(a, axis: int, start: int, stop: int):
    av = value_of(a)
    sl = [slice(None)] * av.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)

    def back(g):
        gx = np.zeros_like(av)
        gx[sl] = g
        return gx

    return _make(_tape_of(a), np.ascontiguousarray(av[sl]), [(a, back)])


# ---------------------------------------------------------------------------
# linear algebra and network primitives


def matmul(a, b):
    av, bv = value_of(a), value_of(b)
    out = backend.matmul(av, bv)

    def back_a(g):
        bt = np.ascontiguousarray(np.swapaxes(bv, -1, -2))
        return _unbroadcast(backend.matmul(g, bt), av.shape)

    def back_b(g):
        at = np.ascontiguousarray(np.swapaxes(av, -1, -2))
        return _unbroadcast(backend.matmul(at, g), bv.shape)

    return _make(_tape_of(a, b), out, [(a, back_a), (b, back_b)])


def conv2d(x, w, b=None, stride: int = 1, pad: str = "same"):
    xv, wv = value_of(x), value_of(w)
    out = backend.conv2d(xv, wv, stride=stride, pad=pad)
    kh, kw, cin_g, _ = wv.shape
    groups = xv.shape[2] // cin_g
    pairs = [
        (x, lambda g: backend.conv2d_grad_input(g, wv, stride, pad, xv.shape)),
        (w, lambda g: backend.conv2d_grad_weight(xv, g, kh, kw, stride, pad, groups)),
    ]
    node = _make(_tape_of(x, w, b), out, pairs)
    if b is not None:
        node = add(node, b)
    return node


def softmax(a):
    """Max-subtracted softmax over the last axis."""
    av = value_of(a)
    m = np.max(av, axis=-1, keepdims=True)
    e = np.exp(av - m)
    y = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        dot = np.sum(g * y, axis=-1, keepdims=True)
        return (g - dot) * y

    return _make(_tape_of(a), y, [(a, back)])
