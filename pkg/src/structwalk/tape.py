"""Reverse-mode automatic differentiation over dense 2-D float64 arrays.

Minimal by design: only the tensor ranks and operations the model and its
objectives need, each with a hand-written backward rule small enough to
audit.  Operations record onto the innermost active Tape whenever any input
requires gradients; backward() replays the records in exact reverse order.

Every operation validates that its result is finite, so a NaN or overflow
surfaces at the op that produced it instead of corrupting training silently.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import backend

_ACTIVE: list["Tape"] = []


class Tensor:
    """A 2-D float64 array with an optional gradient accumulator."""

    __slots__ = ("data", "requires_grad", "grad", "tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError("tensors are 2-D")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ValueError("item() requires a scalar tensor")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


class _Record:
    __slots__ = ("out", "inputs", "backward_fn")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...],
                 backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]]):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Append-only operation log; use as a context manager around a forward
    pass, then call backward() on the resulting scalar."""

    def __init__(self) -> None:
        self.records: list[_Record] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.pop()

    def clear(self) -> None:
        self.records = []
        self.consumed = True


def _current_tape() -> Tape | None:
    return _ACTIVE[-1] if _ACTIVE else None


def _finish(name: str, out_data: np.ndarray, inputs: tuple[Tensor, ...],
            backward_fn) -> Tensor:
    if not np.isfinite(out_data).all():
        raise FloatingPointError(f"non-finite result in {name}")
    out = Tensor(out_data)
    tape = _current_tape()
    if tape is not None and not tape.consumed and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.tape = tape
        tape.records.append(_Record(out, inputs, backward_fn))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    for ax in (0, 1):
        if shape[ax] == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.data.shape} x {b.data.shape}")
    out = a.data @ b.data
    ad, bd = a.data, b.data
    na, nb = a.requires_grad, b.requires_grad

    def back(g):
        return (g @ bd.T if na else None,
                ad.T @ g if nb else None)

    return _finish("matmul", out, (a, b), back)


def transpose(a: Tensor) -> Tensor:
    return _finish("transpose", a.data.T.copy(), (a,), lambda g: (g.T,))


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data
    ash, bsh = a.data.shape, b.data.shape
    na, nb = a.requires_grad, b.requires_grad

    def back(g):
        return (_unbroadcast(g, ash) if na else None,
                _unbroadcast(g, bsh) if nb else None)

    return _finish("add", out, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    ad, bd = a.data, b.data
    na, nb = a.requires_grad, b.requires_grad

    def back(g):
        return (_unbroadcast(g * bd, ad.shape) if na else None,
                _unbroadcast(g * ad, bd.shape) if nb else None)

    return _finish("mul", out, (a, b), back)


def scalar_mul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _finish("scalar_mul", a.data * c, (a,), lambda g: (g * c,))


def neg(a: Tensor) -> Tensor:
    return _finish("neg", -a.data, (a,), lambda g: (-g,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _finish("relu", np.where(mask, a.data, 0.0), (a,),
                   lambda g: (g * mask,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)

    def back(g):
        return (g * s * (1.0 - s),)

    return _finish("sigmoid", s, (a,), back)


def log_sigmoid(a: Tensor) -> Tensor:
    # stable branches: -log1p(exp(-x)) for x >= 0, x - log1p(exp(x)) below
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = -np.log1p(np.exp(-x[pos]))
    out[~pos] = x[~pos] - np.log1p(np.exp(x[~pos]))
    sig_negx = _sigmoid(-x)

    def back(g):
        return (g * sig_negx,)

    return _finish("log_sigmoid", out, (a,), back)


def softmax_rows(a: Tensor) -> Tensor:
    """Softmax along each row; a single-row tensor is softmax of a vector."""
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def back(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return (y * (g - dot),)

    return _finish("softmax_rows", y, (a,), back)


def mean_rows(a: Tensor) -> Tensor:
    """Mean over all rows, returned as a single row."""
    m = a.data.shape[0]
    out = a.data.mean(axis=0, keepdims=True)

    def back(g):
        return (np.repeat(g / m, m, axis=0),)

    return _finish("mean_rows", out, (a,), back)


def sum_all(a: Tensor) -> Tensor:
    shape = a.data.shape

    def back(g):
        return (np.full(shape, g[0, 0]),)

    return _finish("sum_all", a.data.sum().reshape(1, 1), (a,), back)


def dot_rows(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise dot product, returned as a column."""
    if a.data.shape != b.data.shape:
        raise ValueError("dot_rows requires equal shapes")
    out = (a.data * b.data).sum(axis=1, keepdims=True)
    ad, bd = a.data, b.data
    na, nb = a.requires_grad, b.requires_grad

    def back(g):
        return (g * bd if na else None,
                g * ad if nb else None)

    return _finish("dot_rows", out, (a, b), back)


def reshape(a: Tensor, rows: int, cols: int) -> Tensor:
    shape = a.data.shape

    def back(g):
        return (g.reshape(shape),)

    return _finish("reshape", a.data.reshape(rows, cols).copy(), (a,), back)


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Row lookup a[idx]; the backward pass scatter-adds into a.

    Repeated indices are allowed (their gradients accumulate).  The scatter
    sorts inside the backward call so inference-only gathers pay nothing.
    """
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("gather_rows takes a flat index array")
    out = a.data[idx]
    n_rows = a.data.shape[0]

    def back(g):
        grad = np.zeros((n_rows, g.shape[1]))
        if len(idx):
            order = np.argsort(idx, kind="stable")
            sorted_idx = idx[order]
            starts = np.concatenate([[0], np.flatnonzero(np.diff(sorted_idx)) + 1])
            grad[sorted_idx[starts]] = np.add.reduceat(g[order], starts, axis=0)
        return (grad,)

    return _finish("gather_rows", out, (a,), back)


def scatter_rows(a: Tensor, idx: np.ndarray, num_rows: int) -> Tensor:
    """Place row i of a at position idx[i] of a zero matrix.

    Indices must be unique; this is the inverse layout step of gather_rows
    for one-to-one placements (e.g. re-inserting active-node rows into a
    full frontier block).
    """
    idx = np.asarray(idx, dtype=np.int64)
    if len(np.unique(idx)) != len(idx):
        raise ValueError("scatter_rows requires unique indices")
    out = np.zeros((num_rows, a.data.shape[1]))
    out[idx] = a.data

    def back(g):
        return (g[idx],)

    return _finish("scatter_rows", out, (a,), back)


def segment_sum(a: Tensor, indptr: np.ndarray) -> Tensor:
    """Sum contiguous row segments: out[s] = a[indptr[s]:indptr[s+1]].sum(0).

    Segment boundaries are fixed integers, not differentiated.
    """
    indptr = np.asarray(indptr, dtype=np.int64)
    if indptr[0] != 0 or indptr[-1] != a.data.shape[0] or (np.diff(indptr) < 0).any():
        raise ValueError("invalid segment boundaries")
    lengths = np.diff(indptr)
    n_seg = len(lengths)
    out = np.zeros((n_seg, a.data.shape[1]))
    nonempty = lengths > 0
    if nonempty.any():
        sums = np.add.reduceat(a.data, indptr[:-1][nonempty], axis=0)
        out[nonempty] = sums

    def back(g):
        return (np.repeat(g, lengths, axis=0),)

    return _finish("segment_sum", out, (a,), back)


def segment_weighted_sum(a: Tensor, idx: np.ndarray, w: np.ndarray,
                         indptr: np.ndarray) -> Tensor:
    """Fused out[t] = sum over entries e of segment t of w[e] * a[idx[e]].

    Equivalent to segment_sum(mul(gather_rows(a, idx), w-column), indptr)
    without materializing the gathered block.  idx, w and indptr are fixed
    plan data, not differentiated; the gradient flows to a only.
    """
    idx = np.asarray(idx, dtype=np.int64)
    w = np.ascontiguousarray(w, dtype=np.float64).ravel()
    indptr = np.asarray(indptr, dtype=np.int64)
    if idx.ndim != 1 or w.shape != idx.shape:
        raise ValueError("idx and w must be 1-D arrays of equal length")
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise ValueError("entry index out of range")
    if indptr[0] != 0 or indptr[-1] != len(idx) or (np.diff(indptr) < 0).any():
        raise ValueError("invalid segment boundaries")
    h = np.ascontiguousarray(a.data)
    out = backend.kernels.seg_wsum(h, idx, w, indptr)
    n_rows = a.data.shape[0]

    def back(g):
        return (backend.kernels.seg_wsum_back(
            np.ascontiguousarray(g), idx, w, indptr, n_rows),)

    return _finish("segment_weighted_sum", out, (a,), back)


def backward(tape: Tape, loss: Tensor) -> None:
    """Populate .grad on every requires_grad tensor reachable from loss.

    Repeated calls on the same tape accumulate (gradients add).
    """
    if tape.consumed:
        raise RuntimeError("tape consumed; build a fresh tape for another backward pass")
    if loss.data.shape != (1, 1):
        raise ValueError("loss must be a scalar tensor")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    holders: dict[int, Tensor] = {id(loss): loss}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.out), None)
        if g is None:
            continue
        if rec.out.requires_grad:
            rec.out.grad = g if rec.out.grad is None else rec.out.grad + g
        input_grads = rec.backward_fn(g)
        for t, gi in zip(rec.inputs, input_grads):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            holders[key] = t
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    for key, g in grads.items():
        t = holders[key]
        if t.requires_grad and t is not loss:
            t.grad = g if t.grad is None else t.grad + g


def zero_grads(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


def finite_diff_check(f: Callable[[Sequence[Tensor]], Tensor],
                      params: Sequence[Tensor],
                      eps: float = 1e-5,
                      coords_per_tensor: int = 120,
                      seed: int = 0) -> float:
    """Compare tape gradients of f against central finite differences.

    f must be deterministic given the parameter values (re-seeded internally
    per call); this is verified by evaluating it twice and requiring exact
    equality.  Samples coords_per_tensor coordinates per parameter and
    returns the maximum relative error
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    with Tape() as tape:
        out = f(params)
    base = out.item()
    recheck = f(params).item()
    if recheck != base:
        raise ValueError("function is not deterministic: re-evaluation changed the loss")
    zero_grads(params)
    backward(tape, out)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        size = p.data.size
        cols = p.data.shape[1]
        if size > coords_per_tensor:
            flat = rng.choice(size, size=coords_per_tensor, replace=False)
        else:
            flat = np.arange(size)
        for fi in flat:
            i, j = divmod(int(fi), cols)
            orig = p.data[i, j]
            p.data[i, j] = orig + eps
            plus = f(params).item()
            p.data[i, j] = orig - eps
            minus = f(params).item()
            p.data[i, j] = orig
            numeric = (plus - minus) / (2.0 * eps)
            a = float(analytic[i, j])
            rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, rel)
    return worst
