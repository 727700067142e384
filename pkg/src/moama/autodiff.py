"""Tape-based reverse-mode differentiation over dense float64 arrays.

Small on purpose: just the operations the encoder, decoders, and losses need.
Every op validates that its output is finite and raises NumericsError
otherwise. Scatter-style gradients use ``np.add.at`` on index arrays that
callers keep in a fixed order, so repeated runs are bit-identical.

Tensors built from parents with ``requires_grad=False`` record no tape, which
makes pure inference (e.g. influence analysis) allocation-light.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericsError


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backprop")

    def __init__(self, values, requires_grad=False, _parents=(), _backprop=None):
        v = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise NumericsError("non-finite tensor values")
        self.values = v
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backprop = _backprop if self.requires_grad else None

    @property
    def shape(self):
        return self.values.shape

    def item(self) -> float:
        return float(self.values)

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every reachable input."""
        if self.values.size != 1:
            raise ValueError("backward() requires a scalar")
        if not self.requires_grad:
            raise ValueError("backward() on a graph with no differentiable inputs")
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
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.values)
        for node in reversed(order):
            if node._backprop is not None and node.grad is not None:
                node._backprop(node.grad)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"


def const(values) -> Tensor:
    return Tensor(values)


def parameter(values) -> Tensor:
    return Tensor(values, requires_grad=True)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.values)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)

    def back(g):
        _accum(a, _unbroadcast(g, a.values.shape))
        _accum(b, _unbroadcast(g, b.values.shape))

    return Tensor(a.values + b.values, _parents=(a, b), _backprop=back)


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)

    def back(g):
        _accum(a, _unbroadcast(g, a.values.shape))
        _accum(b, _unbroadcast(-g, b.values.shape))

    return Tensor(a.values - b.values, _parents=(a, b), _backprop=back)


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)

    def back(g):
        _accum(a, _unbroadcast(g * b.values, a.values.shape))
        _accum(b, _unbroadcast(g * a.values, b.values.shape))

    return Tensor(a.values * b.values, _parents=(a, b), _backprop=back)


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)

    def back(g):
        _accum(a, _unbroadcast(g / b.values, a.values.shape))
        _accum(b, _unbroadcast(-g * a.values / (b.values * b.values), b.values.shape))

    return Tensor(a.values / b.values, _parents=(a, b), _backprop=back)


def power(a, p) -> Tensor:
    a = _lift(a)
    p = float(p)

    def back(g):
        _accum(a, g * p * np.power(a.values, p - 1.0))

    return Tensor(np.power(a.values, p), _parents=(a,), _backprop=back)


def sqrt(a) -> Tensor:
    a = _lift(a)
    out_vals = np.sqrt(a.values)

    def back(g):
        _accum(a, g * 0.5 / out_vals)

    return Tensor(out_vals, _parents=(a,), _backprop=back)


def exp(a) -> Tensor:
    a = _lift(a)
    out_vals = np.exp(a.values)

    def back(g):
        _accum(a, g * out_vals)

    return Tensor(out_vals, _parents=(a,), _backprop=back)


def log(a) -> Tensor:
    a = _lift(a)

    def back(g):
        _accum(a, g / a.values)

    return Tensor(np.log(a.values), _parents=(a,), _backprop=back)


def relu(a) -> Tensor:
    a = _lift(a)
    mask = a.values > 0.0

    def back(g):
        _accum(a, g * mask)

    return Tensor(a.values * mask, _parents=(a,), _backprop=back)


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)

    def back(g):
        _accum(a, g @ b.values.T)
        _accum(b, a.values.T @ g)

    return Tensor(a.values @ b.values, _parents=(a, b), _backprop=back)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _lift(a)

    def back(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.values.shape).copy())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(gg, a.values.shape).copy())

    return Tensor(a.values.sum(axis=axis, keepdims=keepdims), _parents=(a,), _backprop=back)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = _lift(a)
    count = a.values.size if axis is None else a.values.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def take_rows(a, idx) -> Tensor:
    """Gather rows by integer index; gradient scatter-adds in index order."""
    a = _lift(a)
    idx = np.asarray(idx, dtype=np.int64)

    def back(g):
        if not a.requires_grad:
            return
        if a.grad is None:
            a.grad = np.zeros_like(a.values)
        np.add.at(a.grad, idx, g)

    return Tensor(a.values[idx], _parents=(a,), _backprop=back)


def _canonical_order(seg: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Row order sorted by (segment, row contents lexicographically).

    Accumulating in this order makes per-segment sums independent of how the
    caller labeled the rows: the addend multiset fixes the result bit-for-bit
    (ties hold equal values, which add identically in either order).
    """
    flat = values.reshape(values.shape[0], -1)
    keys = [flat[:, i] for i in range(flat.shape[1] - 1, -1, -1)]
    keys.append(seg)
    return np.lexsort(keys)


def segment_sum(a, segments, n_segments: int) -> Tensor:
    """out[s] = sum of rows i with segments[i] == s, in canonical row order."""
    a = _lift(a)
    seg = np.asarray(segments, dtype=np.int64)
    out_vals = np.zeros((n_segments,) + a.values.shape[1:], dtype=np.float64)
    if a.values.ndim >= 2 and a.values.shape[0] > 1:
        order = _canonical_order(seg, a.values)
        np.add.at(out_vals, seg[order], a.values[order])
    else:
        np.add.at(out_vals, seg, a.values)

    def back(g):
        _accum(a, g[seg])

    return Tensor(out_vals, _parents=(a,), _backprop=back)


def segment_max(a, segments, n_segments: int) -> Tensor:
    """Per-segment max; gradient flows to the first (lowest row id) maximum."""
    a = _lift(a)
    seg = np.asarray(segments, dtype=np.int64)
    counts = np.bincount(seg, minlength=n_segments)
    if np.any(counts == 0):
        raise ValueError("segment_max over an empty segment")
    out_vals = np.full((n_segments,) + a.values.shape[1:], -np.inf)
    np.maximum.at(out_vals, seg, a.values)

    def back(g):
        if not a.requires_grad:
            return
        ga = np.zeros_like(a.values)
        taken = np.zeros_like(out_vals, dtype=bool)
        for i in range(a.values.shape[0]):
            s = seg[i]
            hit = (a.values[i] == out_vals[s]) & ~taken[s]
            ga[i] = g[s] * hit
            taken[s] |= hit
        _accum(a, ga)

    return Tensor(out_vals, _parents=(a,), _backprop=back)


def slice_cols(a, start: int, stop: int) -> Tensor:
    a = _lift(a)

    def back(g):
        if not a.requires_grad:
            return
        ga = np.zeros_like(a.values)
        ga[:, start:stop] = g
        _accum(a, ga)

    return Tensor(a.values[:, start:stop], _parents=(a,), _backprop=back)


def log_softmax(a) -> Tensor:
    """Row-wise log-softmax via the shift-invariant log-sum-exp composition."""
    a = _lift(a)
    shift = const(a.values.max(axis=1, keepdims=True))
    z = sub(a, shift)
    lse = log(tsum(exp(z), axis=1, keepdims=True))
    return sub(z, lse)
