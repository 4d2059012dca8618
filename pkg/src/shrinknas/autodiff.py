"""Minimal reverse-mode differentiation over float64 numpy arrays.

Every op returns a :class:`Tensor` that remembers its parents and a closure
mapping the upstream gradient to per-parent gradients. :func:`grad` walks the
recorded graph backwards from a scalar loss.
"""

from __future__ import annotations

import numpy as np


class UsageError(RuntimeError):
    """Differentiation requested without a recorded forward pass."""


class ShapeError(ValueError):
    pass


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, parents=(), backward=None, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.parents = parents
        self.backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def recorded(self) -> bool:
        return self.backward is not None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data * c, (a,), lambda g: (g * c,))


def matmul(x, w) -> Tensor:
    """``x[..., C] @ w[C, F]``."""
    x, w = as_tensor(x), as_tensor(w)
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"matmul: {x.shape} @ {w.shape}")

    def backward(g):
        gx = g @ w.data.T
        gw = x.data.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return gx, gw

    return Tensor(x.data @ w.data, (x, w), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ex = np.exp(a.data[~pos])
    out[~pos] = ex / (1.0 + ex)
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return Tensor(a.data * mask, (a,), lambda g: (g * mask,))


def identity(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data, (a,), lambda g: (g,))


ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh, "identity": identity}


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if len(tensors) == 1:
        return identity(tensors[0])
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def add_n(tensors) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    return Tensor(
        sum(t.data for t in tensors),
        tuple(tensors),
        lambda g: tuple(_unbroadcast(g, t.shape) for t in tensors),
    )


def mean_n(tensors) -> Tensor:
    return scale(add_n(tensors), 1.0 / len(tensors))


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    out = a.data.mean(axis=axis)
    count = a.data.size // max(out.size, 1)

    def backward(g):
        g = np.asarray(g)
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape) / count,)

    return Tensor(out, (a,), backward)


def _pad_hw(x: np.ndarray) -> np.ndarray:
    return np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))


def depthwise3x3(x, w) -> Tensor:
    """Per-channel 3x3 filter, stride 1, zero padding 1. ``x`` is NHWC, ``w`` is (3, 3, C)."""
    x, w = as_tensor(x), as_tensor(w)
    if w.shape != (3, 3, x.shape[-1]):
        raise ShapeError(f"depthwise3x3: filter {w.shape} for input {x.shape}")
    _, h, wd, _ = x.shape
    xp = _pad_hw(x.data)
    out = np.zeros_like(x.data)
    for dy in range(3):
        for dx in range(3):
            out += xp[:, dy : dy + h, dx : dx + wd, :] * w.data[dy, dx]

    def backward(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w.data)
        for dy in range(3):
            for dx in range(3):
                win = xp[:, dy : dy + h, dx : dx + wd, :]
                gw[dy, dx] = (g * win).sum(axis=(0, 1, 2))
                gxp[:, dy : dy + h, dx : dx + wd, :] += g * w.data[dy, dx]
        return gxp[:, 1:-1, 1:-1, :], gw

    return Tensor(out, (x, w), backward)


def im2col3x3(x) -> Tensor:
    """Stack the 9 zero-padded 3x3 neighbours of every pixel along channels."""
    x = as_tensor(x)
    _, h, wd, c = x.shape
    xp = _pad_hw(x.data)
    cols = np.concatenate(
        [xp[:, dy : dy + h, dx : dx + wd, :] for dy in range(3) for dx in range(3)], axis=-1
    )

    def backward(g):
        gxp = np.zeros_like(xp)
        k = 0
        for dy in range(3):
            for dx in range(3):
                gxp[:, dy : dy + h, dx : dx + wd, :] += g[..., k * c : (k + 1) * c]
                k += 1
        return (gxp[:, 1:-1, 1:-1, :],)

    return Tensor(cols, (x,), backward)


def maxpool2x2(x) -> Tensor:
    x = as_tensor(x)
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2x2 needs even spatial dims, got {x.shape}")
    win = x.data.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, h // 2, w // 2, c, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gwin = np.zeros_like(win)
        np.put_along_axis(gwin, idx[..., None], g[..., None], axis=-1)
        gx = gwin.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, h, w, c)
        return (gx,)

    return Tensor(out, (x,), backward)


def take_rows(table, idx) -> Tensor:
    """Embedding lookup ``table[idx]``."""
    table = as_tensor(table)
    idx = np.asarray(idx)

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return Tensor(table.data[idx], (table,), backward)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(``logits``)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    flat = logits.data.reshape(-1, logits.shape[-1])
    lab = labels.reshape(-1)
    logp = log_softmax(flat)
    m = flat.shape[0]
    loss = -logp[np.arange(m), lab].mean()

    def backward(g):
        p = np.exp(logp)
        p[np.arange(m), lab] -= 1.0
        return ((g * p / m).reshape(logits.shape),)

    return Tensor(loss, (logits,), backward)


def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backprop(loss: Tensor) -> dict[int, np.ndarray]:
    """Gradients of ``loss`` keyed by ``id`` of every tensor in its graph."""
    if not isinstance(loss, Tensor) or not loss.recorded:
        raise UsageError("loss has no recorded forward pass")
    if loss.data.size != 1:
        raise UsageError(f"loss must be a scalar, got shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo_order(loss)):
        g = grads.get(id(node))
        if g is None or node.backward is None:
            continue
        for parent, pg in zip(node.parents, node.backward(g)):
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = np.asarray(pg, dtype=np.float64)
    return grads


def grad(parameters, loss: Tensor):
    """Gradient of ``loss`` for each parameter tensor.

    ``parameters`` may be a dict (returns a dict with the same keys) or a
    sequence (returns a list). Parameters not reached by the loss get zeros.
    """
    table = backprop(loss)

    def one(p):
        g = table.get(id(p))
        return np.zeros_like(p.data) if g is None else np.asarray(g).reshape(p.shape)

    if isinstance(parameters, dict):
        return {k: one(p) for k, p in parameters.items()}
    return [one(p) for p in parameters]


def param_table(arrays: dict) -> dict[str, Tensor]:
    return {k: Tensor(v, name=k) for k, v in arrays.items()}
