"""Dense tensors with reverse-mode automatic differentiation.

Only the shapes the model needs are supported: scalars, vectors and
matrices. Every op checks its output for NaN/Inf and raises
:class:`NumericFault` on the spot, so a blown-up forward pass fails
loudly instead of poisoning the loss.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operands with incompatible shapes."""


class NumericFault(ArithmeticError):
    """A forward op produced NaN or Inf."""


class LifecycleError(RuntimeError):
    """backward() called on something that is not a scalar loss."""


class Tensor:
    """A dense array plus the bookkeeping for the backward pass.

    ``grad`` is populated (for tensors created with ``requires_grad``)
    by calling :meth:`backward` on a downstream scalar; gradients
    accumulate additively until cleared by the owner.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = tuple(parents)
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def backward(self):
        if self.data.shape != ():
            raise LifecycleError("backward() expects a scalar loss tensor")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.ones((), dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
            if node._backward_fn is None:
                continue
            for parent, pg in zip(node._parents, node._backward_fn(g)):
                if pg is None:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NumericFault(f"non-finite values produced by {what}")


def _make(data, parents, backward_fn, what):
    _check_finite(data, what)
    return Tensor(data, parents=parents, backward_fn=backward_fn)


def constant(array, dtype=None) -> Tensor:
    return Tensor(np.asarray(array, dtype=dtype))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim == 2 and b.data.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul {a.shape} @ {b.shape}")
        out = a.data @ b.data

        def bw(g):
            return g @ b.data.T, a.data.T @ g

    elif a.data.ndim == 2 and b.data.ndim == 1:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul {a.shape} @ {b.shape}")
        out = a.data @ b.data

        def bw(g):
            return np.outer(g, b.data), a.data.T @ g

    elif a.data.ndim == 1 and b.data.ndim == 2:
        if a.shape[0] != b.shape[0]:
            raise ShapeError(f"matmul {a.shape} @ {b.shape}")
        out = a.data @ b.data

        def bw(g):
            return b.data @ g, np.outer(a.data, g)

    else:
        raise ShapeError(f"matmul unsupported ranks {a.shape} @ {b.shape}")
    return _make(out, (a, b), bw, "matmul")


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot {a.shape} . {b.shape}")
    out = a.data @ b.data

    def bw(g):
        return g * b.data, g * a.data

    return _make(out, (a, b), bw, "dot")


def bilinear(y: Tensor, w: Tensor, c: Tensor) -> Tensor:
    """y^T W c as a scalar."""
    return dot(y, matmul(w, c))


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape == b.shape:
        out = a.data + b.data

        def bw(g):
            return g, g

    elif a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        out = a.data + b.data

        def bw(g):
            return g, g.sum(axis=0)

    else:
        raise ShapeError(f"add {a.shape} + {b.shape}")
    return _make(out, (a, b), bw, "add")


def scale(x: Tensor, c: float) -> Tensor:
    out = x.data * c

    def bw(g):
        return (g * c,)

    return _make(out, (x,), bw, "scale")


def concat(tensors, axis=0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of nothing")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, tuple(tensors), bw, "concat")


def relu(x: Tensor) -> Tensor:
    keep = x.data > 0
    out = np.where(keep, x.data, 0.0).astype(x.dtype)

    def bw(g):
        return (g * keep,)

    return _make(out, (x,), bw, "relu")


def softmax(x: Tensor) -> Tensor:
    if x.data.ndim != 1:
        raise ShapeError(f"softmax expects a vector, got {x.shape}")
    shifted = x.data - x.data.max()
    e = np.exp(shifted)
    p = e / e.sum()

    def bw(g):
        return (p * (g - float(g @ p)),)

    return _make(p, (x,), bw, "softmax")


def masked_log_softmax(x: Tensor, mask) -> Tensor:
    """Log-softmax restricted to ``mask``; masked entries come out -inf."""
    m = np.asarray(mask, dtype=bool)
    if x.data.ndim != 1 or m.shape != x.shape:
        raise ShapeError(f"masked_log_softmax {x.shape} with mask {m.shape}")
    if not m.any():
        raise ShapeError("masked_log_softmax with an all-false mask")
    vals = x.data[m]
    mx = vals.max()
    e = np.exp(vals - mx)
    z = e.sum()
    logp = np.full(x.shape, -np.inf, dtype=x.dtype)
    logp[m] = (vals - mx) - np.log(z)
    pm = e / z

    def bw(g):
        gm = g[m]
        gx = np.zeros_like(x.data)
        gx[m] = gm - pm * gm.sum()
        return (gx,)

    _check_finite(logp[m], "masked_log_softmax")
    return Tensor(logp, parents=(x,), backward_fn=bw)


def pick(x: Tensor, index: int) -> Tensor:
    if x.data.ndim != 1:
        raise ShapeError(f"pick expects a vector, got {x.shape}")
    out = x.data[index]

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[index] = g
        return (gx,)

    return _make(out, (x,), bw, "pick")


def sum_all(x: Tensor) -> Tensor:
    out = x.data.sum()

    def bw(g):
        return (np.full_like(x.data, g),)

    return _make(out, (x,), bw, "sum_all")


def sumsq(x: Tensor) -> Tensor:
    out = (x.data * x.data).sum()

    def bw(g):
        return (2.0 * g * x.data,)

    return _make(out, (x,), bw, "sumsq")


def embedding(table: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError("embedding indices must be a flat list")
    out = table.data[idx]

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return _make(out, (table,), bw, "embedding")


def gather_rows(x: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)
    out = x.data[idx]

    def bw(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _make(out, (x,), bw, "gather_rows")


def row_scale(x: Tensor, weights) -> Tensor:
    """Scale each row of a matrix by a constant per-row factor."""
    w = np.asarray(weights, dtype=x.dtype)
    if x.data.ndim != 2 or w.shape != (x.shape[0],):
        raise ShapeError(f"row_scale {x.shape} with {w.shape}")
    out = x.data * w[:, None]

    def bw(g):
        return (g * w[:, None],)

    return _make(out, (x,), bw, "row_scale")


def max_over_rows(x: Tensor) -> Tensor:
    """Column-wise max of a matrix; the pooled vector for a feature set."""
    if x.data.ndim != 2:
        raise ShapeError(f"max_over_rows expects a matrix, got {x.shape}")
    arg = x.data.argmax(axis=0)
    cols = np.arange(x.shape[1])
    out = x.data[arg, cols]

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[arg, cols] = g
        return (gx,)

    return _make(out, (x,), bw, "max_over_rows")


def dropout(x: Tensor, rate: float, rng, train: bool) -> Tensor:
    """Inverted dropout: identity at inference, scaled mask in training."""
    if not 0.0 <= rate < 1.0:
        raise ShapeError(f"dropout rate {rate} outside [0, 1)")
    if not train or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype)
    factor = 1.0 / (1.0 - rate)
    out = x.data * keep * factor

    def bw(g):
        return (g * keep * factor,)

    return _make(out, (x,), bw, "dropout")


def window_offsets(k: int):
    """Window offsets per the half-width convention: ceil(-s)..ceil(s)."""
    s = (k - 1) / 2.0
    lo = int(np.ceil(-s))
    return list(range(lo, lo + k))


def stack_window(x: Tensor, k: int) -> Tensor:
    """Row i becomes the concatenation of rows i+o over the window offsets,
    zero-padded outside the sequence."""
    if x.data.ndim != 2:
        raise ShapeError(f"stack_window expects a matrix, got {x.shape}")
    n, d = x.shape
    offs = window_offsets(k)
    out = np.zeros((n, k * d), dtype=x.dtype)
    for j, o in enumerate(offs):
        src_lo, src_hi = max(0, o), min(n, n + o)
        dst_lo, dst_hi = max(0, -o), min(n, n - o)
        if src_hi > src_lo:
            out[dst_lo:dst_hi, j * d:(j + 1) * d] = x.data[src_lo:src_hi]

    def bw(g):
        gx = np.zeros_like(x.data)
        for j, o in enumerate(offs):
            src_lo, src_hi = max(0, o), min(n, n + o)
            dst_lo, dst_hi = max(0, -o), min(n, n - o)
            if src_hi > src_lo:
                gx[src_lo:src_hi] += g[dst_lo:dst_hi, j * d:(j + 1) * d]
        return (gx,)

    return _make(out, (x,), bw, "stack_window")
