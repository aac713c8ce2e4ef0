"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation builds a node holding its parents and a closure that
pushes gradients backward. The tape is implicit: calling backward() on
a scalar walks the graph in reverse topological order and accumulates
into .grad. numpy supplies the array arithmetic; every differentiation
rule lives here.
"""

from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse

from .errors import NonFiniteGradient, NonFiniteInput, ShapeMismatch


def _as_array(value) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


def _all_finite(arr: np.ndarray) -> bool:
    # One reduction pass: any NaN/Inf propagates into the sum. A finite
    # array can only fail this by overflowing, at magnitudes far beyond
    # anything a stable computation produces, and that is worth flagging
    # anyway.
    if arr.size == 0:
        return True
    with np.errstate(over="ignore", invalid="ignore"):
        return bool(np.isfinite(arr.sum()))


def _require_finite(*arrays: np.ndarray) -> None:
    for arr in arrays:
        if not _all_finite(arr):
            raise NonFiniteInput("operation received NaN or Inf")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False,
                 parents: Tuple["Tensor", ...] = (),
                 backward: Optional[Callable[[np.ndarray], None]] = None,
                 name: Optional[str] = None):
        self.data = _as_array(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        run_backward(self)

    def __repr__(self) -> str:
        tag = self.name or "tensor"
        return "Tensor(%s, shape=%s)" % (tag, self.data.shape)


def parameter(data, name: Optional[str] = None) -> Tensor:
    t = Tensor(data, requires_grad=True, name=name)
    _require_finite(t.data)
    return t


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _make(data: np.ndarray, parents: Sequence[Tensor],
          backward: Callable[[np.ndarray], None]) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, parents=tuple(parents),
                  backward=backward if req else None)


class GradientTape:
    """Reverse topological order from a root scalar, replayed in reverse."""

    def __init__(self, root: Tensor):
        order: List[Tensor] = []
        seen = set()
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        self.order = order

    def run(self, root: Tensor) -> None:
        root.grad = np.ones_like(root.data)
        for node in reversed(self.order):
            if node._backward is None or node.grad is None:
                continue
            if not _all_finite(node.grad):
                raise NonFiniteGradient(
                    "gradient of %s is not finite" % (node.name or "node"))
            node._backward(node.grad)


def run_backward(root: Tensor) -> None:
    if root.data.size != 1:
        raise ShapeMismatch("backward needs a scalar root, got %s" % (root.shape,))
    GradientTape(root).run(root)


def _accumulate(t: Tensor, grad: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(np.broadcast_to(grad, t.data.shape),
                          dtype=np.float64)
    else:
        t.grad += grad


def _index_add(dest: np.ndarray, indices: np.ndarray, grad: np.ndarray) -> None:
    """dest[indices] += grad with repeated indices. np.add.at is an order
    of magnitude slower at our sizes; a one-hot sparse matmul (2-D) or
    bincount (1-D) does the same grouped sum in C."""
    flat = np.asarray(indices).reshape(-1)
    if flat.size == 0:
        return
    rows = grad.reshape((flat.shape[0],) + dest.shape[1:])
    if dest.ndim == 1:
        dest += np.bincount(flat, weights=rows, minlength=dest.shape[0])
        return
    onehot = scipy.sparse.csr_matrix(
        (np.ones(flat.shape[0]), flat, np.arange(flat.shape[0] + 1)),
        shape=(flat.shape[0], dest.shape[0]))
    dest += onehot.T @ rows


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# --- arithmetic ----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatch("matmul %s @ %s" % (a.shape, b.shape))
    _require_finite(a.data, b.data)
    out_data = a.data @ b.data

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _make(out_data, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_finite(a.data, b.data)
    try:
        out_data = a.data + b.data
    except ValueError as exc:
        raise ShapeMismatch("add %s + %s" % (a.shape, b.shape)) from exc

    def backward(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_finite(a.data, b.data)
    try:
        out_data = a.data * b.data
    except ValueError as exc:
        raise ShapeMismatch("mul %s * %s" % (a.shape, b.shape)) from exc

    def backward(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), backward)


def scale(a: Tensor, s: float) -> Tensor:
    _require_finite(a.data)
    out_data = a.data * s

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * s)

    return _make(out_data, (a,), backward)


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, neg(b))


# --- activations ---------------------------------------------------------

def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    _require_finite(x.data)
    keep = x.data > 0
    out_data = np.where(keep, x.data, slope * x.data)

    def backward(g: np.ndarray) -> None:
        _accumulate(x, g * np.where(keep, 1.0, slope))

    return _make(out_data, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    _require_finite(x.data)
    out_data = np.empty_like(x.data)
    pos = x.data >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out_data[~pos] = ex / (1.0 + ex)

    def backward(g: np.ndarray) -> None:
        _accumulate(x, g * out_data * (1.0 - out_data))

    return _make(out_data, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    _require_finite(x.data)
    out_data = np.tanh(x.data)

    def backward(g: np.ndarray) -> None:
        _accumulate(x, g * (1.0 - out_data * out_data))

    return _make(out_data, (x,), backward)


# --- shape ops -----------------------------------------------------------

def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    try:
        out_data = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeMismatch("reshape %s -> %s" % (x.shape, shape)) from exc

    def backward(g: np.ndarray) -> None:
        _accumulate(x, g.reshape(x.data.shape))

    return _make(out_data, (x,), backward)


def transpose2d(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeMismatch("transpose2d needs a matrix, got %s" % (x.shape,))
    out_data = x.data.T.copy()

    def backward(g: np.ndarray) -> None:
        _accumulate(x, g.T)

    return _make(out_data, (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ShapeMismatch("concat of nothing")
    _require_finite(*[t.data for t in tensors])
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def backward(g: np.ndarray) -> None:
        offset = 0
        for t, size in zip(tensors, sizes):
            index = [slice(None)] * g.ndim
            index[axis] = slice(offset, offset + size)
            _accumulate(t, g[tuple(index)])
            offset += size

    return _make(out_data, tuple(tensors), backward)


def gather_rows(table: Tensor, indices: np.ndarray) -> Tensor:
    idx = np.asarray(indices)
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise ShapeMismatch("gather index out of range")
    _require_finite(table.data)
    out_data = table.data[idx]

    def backward(g: np.ndarray) -> None:
        if not table.requires_grad:
            return
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        _index_add(table.grad, idx, g)

    return _make(out_data, (table,), backward)


# --- reductions ----------------------------------------------------------

def sum_over_axis(x: Tensor, axis: int) -> Tensor:
    _require_finite(x.data)
    out_data = x.data.sum(axis=axis)

    def backward(g: np.ndarray) -> None:
        _accumulate(x, np.expand_dims(g, axis) * np.ones_like(x.data))

    return _make(out_data, (x,), backward)


def mean_over_axis(x: Tensor, axis: int) -> Tensor:
    n = x.data.shape[axis]
    return scale(sum_over_axis(x, axis), 1.0 / n)


def max_over_axis(x: Tensor, axis: int) -> Tensor:
    """Maximum along one axis; ties route the gradient to the first hit."""
    _require_finite(x.data)
    arg = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    out_data = np.take_along_axis(x.data, arg, axis=axis).squeeze(axis)

    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(x.data)
        np.put_along_axis(full, arg, np.expand_dims(g, axis), axis=axis)
        _accumulate(x, full)

    return _make(out_data, (x,), backward)


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; on ties the first argument takes the gradient."""
    if a.data.shape != b.data.shape:
        raise ShapeMismatch("maximum %s vs %s" % (a.shape, b.shape))
    _require_finite(a.data, b.data)
    take_a = a.data >= b.data
    out_data = np.where(take_a, a.data, b.data)

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * take_a)
        _accumulate(b, g * ~take_a)

    return _make(out_data, (a, b), backward)


# --- segment ops (rows grouped by an integer id) ---------------------------

def _check_segments(n_rows: int, segment_ids: np.ndarray, num_segments: int) -> np.ndarray:
    seg = np.asarray(segment_ids)
    if seg.ndim != 1 or seg.shape[0] != n_rows:
        raise ShapeMismatch("segment ids for %d rows, got %s" % (n_rows, seg.shape))
    if seg.size and (seg.min() < 0 or seg.max() >= num_segments):
        raise ShapeMismatch("segment id out of range")
    return seg


def _segment_apply(values: np.ndarray, seg: np.ndarray, num_segments: int,
                   ufunc, init: float) -> np.ndarray:
    """Per-segment ufunc reduction of a 1-D array. Non-decreasing ids take
    the fast contiguous reduceat path; anything else falls back to at()."""
    out = np.full(num_segments, init)
    if seg.size == 0:
        return out
    if np.all(seg[1:] >= seg[:-1]):
        starts = np.flatnonzero(
            np.concatenate(([True], seg[1:] != seg[:-1])))
        out[seg[starts]] = ufunc.reduceat(values, starts)
    else:
        ufunc.at(out, seg, values)
    return out


def segment_sum(x: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    seg = _check_segments(x.data.shape[0], segment_ids, num_segments)
    _require_finite(x.data)
    out_data = np.zeros((num_segments,) + x.data.shape[1:])
    _index_add(out_data, seg, x.data)

    def backward(g: np.ndarray) -> None:
        _accumulate(x, g[seg])

    return _make(out_data, (x,), backward)


def segment_max(x: Tensor, segment_ids: np.ndarray, num_segments: int,
                empty_value: float = 0.0) -> Tensor:
    """Per-segment maximum over 1-D or 2-D rows; empty segments yield
    empty_value and no gradient. Ties route to the earliest row."""
    if x.data.ndim not in (1, 2):
        raise ShapeMismatch("segment_max wants 1-D or 2-D, got %s" % (x.shape,))
    seg = _check_segments(x.data.shape[0], segment_ids, num_segments)
    _require_finite(x.data)
    out_data = np.full((num_segments,) + x.data.shape[1:], -np.inf)
    np.maximum.at(out_data, seg, x.data)
    empty = np.isinf(out_data)
    out_data[empty] = empty_value

    n = x.data.shape[0]
    row_ids = np.arange(n) if x.data.ndim == 1 else np.arange(n)[:, None]
    cand = np.where(x.data == out_data[seg], row_ids, n)
    sentinel = np.full(out_data.shape, n, dtype=np.int64)
    np.minimum.at(sentinel, seg, cand)
    winner = np.where(sentinel < n, sentinel, -1)

    def backward(g: np.ndarray) -> None:
        if not x.requires_grad:
            return
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        valid = winner >= 0
        if x.data.ndim == 1:
            np.add.at(x.grad, winner[valid], g[valid])
        else:
            rows = winner[valid]
            cols = np.nonzero(valid)[1]
            np.add.at(x.grad, (rows, cols), g[valid])

    return _make(out_data, (x,), backward)


def segment_softmax(scores: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Stable softmax over 1-D scores grouped by segment id."""
    if scores.data.ndim != 1:
        raise ShapeMismatch("segment_softmax wants 1-D scores, got %s" % (scores.shape,))
    seg = _check_segments(scores.data.shape[0], segment_ids, num_segments)
    _require_finite(scores.data)
    seg_max = _segment_apply(scores.data, seg, num_segments, np.maximum, -np.inf)
    seg_max[np.isinf(seg_max)] = 0.0
    shifted = np.exp(scores.data - seg_max[seg])
    denom = _segment_apply(shifted, seg, num_segments, np.add, 0.0)
    out_data = shifted / np.where(denom == 0.0, 1.0, denom)[seg]

    def backward(g: np.ndarray) -> None:
        weighted = _segment_apply(out_data * g, seg, num_segments, np.add, 0.0)
        _accumulate(scores, out_data * (g - weighted[seg]))

    return _make(out_data, (scores,), backward)


# --- normalization, dropout, loss -----------------------------------------

def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    if x.data.ndim != 2 or gain.data.shape != (x.data.shape[1],) \
            or bias.data.shape != (x.data.shape[1],):
        raise ShapeMismatch("layer_norm %s gain %s bias %s"
                            % (x.shape, gain.shape, bias.shape))
    _require_finite(x.data, gain.data, bias.data)
    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out_data = xhat * gain.data + bias.data

    def backward(g: np.ndarray) -> None:
        _accumulate(gain, (g * xhat).sum(axis=0))
        _accumulate(bias, g.sum(axis=0))
        gx = g * gain.data
        m1 = gx.mean(axis=1, keepdims=True)
        m2 = (gx * xhat).mean(axis=1, keepdims=True)
        _accumulate(x, inv * (gx - m1 - xhat * m2))

    return _make(out_data, (x, gain, bias), backward)


def dropout(x: Tensor, p: float, rng: np.random.Generator,
            training: bool = True) -> Tensor:
    """Inverted dropout: kept units are scaled by 1/(1-p) so evaluation
    needs no correction."""
    if not training or p <= 0.0:
        return x
    if p >= 1.0:
        raise ValueError("dropout probability must be < 1")
    _require_finite(x.data)
    keep = (rng.random(x.data.shape) >= p) / (1.0 - p)
    out_data = x.data * keep

    def backward(g: np.ndarray) -> None:
        _accumulate(x, g * keep)

    return _make(out_data, (x,), backward)


def bce_loss(pred: Tensor, target: Tensor, clamp: float = 1e-7) -> Tensor:
    """Mean binary cross entropy on probabilities clamped away from 0/1."""
    if pred.data.shape != target.data.shape:
        raise ShapeMismatch("bce %s vs %s" % (pred.shape, target.shape))
    _require_finite(pred.data, target.data)
    p = np.clip(pred.data, clamp, 1.0 - clamp)
    t = target.data
    n = max(p.size, 1)
    out_data = np.array((-(t * np.log(p) + (1.0 - t) * np.log1p(-p))).sum() / n)

    def backward(g: np.ndarray) -> None:
        inside = (pred.data > clamp) & (pred.data < 1.0 - clamp)
        grad = (p - t) / (p * (1.0 - p)) / n
        _accumulate(pred, g * grad * inside)

    return _make(out_data, (pred, target), backward)


# --- finite-difference checking -------------------------------------------

def grad_check(fn: Callable[[], Tensor], params: Sequence[Tensor],
               eps: float = 1e-5) -> float:
    """Central differences against the analytic gradient. Returns the
    worst relative error |a - n| / max(1e-8, |a| + |n|) over all entries."""
    for p in params:
        p.zero_grad()
    out = fn()
    run_backward(out)
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        aflat = np.ravel(analytic)
        flat = p.data.flat  # works on any memory layout
        for i in range(p.data.size):
            saved = flat[i]
            flat[i] = saved + eps
            up = float(fn().data)
            flat[i] = saved - eps
            down = float(fn().data)
            flat[i] = saved
            numeric = (up - down) / (2.0 * eps)
            err = abs(aflat[i] - numeric) / max(1e-8, abs(aflat[i]) + abs(numeric))
            worst = max(worst, err)
    return worst
