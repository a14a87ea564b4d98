"""Dense fp64 tensors with reverse-mode automatic differentiation.

Forward ops execute eagerly on numpy arrays. When a Tape is active and any
input requires grad, the op pushes a backward closure onto the tape; the
backward pass replays the tape in reverse, accumulating into .grad. fp64
everywhere: desk scale makes throughput irrelevant and keeps the
finite-difference gradient checks crisp.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DegenerateMaskError, EvaluationError, ShapeError

__all__ = [
    "Tensor", "Tape", "tensor", "add", "sub", "mul", "neg", "matmul",
    "transpose", "power", "exp", "log", "tanh", "tsum", "tmean", "concat",
    "narrow", "gather_rows", "pick", "softmax", "log_softmax", "linear",
    "layer_norm", "scaled_dot_attention", "grad_check", "no_grad",
]


class Tensor:
    """A row-major fp64 array plus a gradient accumulator."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += _unbroadcast(g, self.data.shape)

    # operator sugar; all arithmetic routes through the module-level ops
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


class Tape:
    """Ordered record of differentiable ops for one forward computation.

    Ops are appended in execution order, so inputs always precede the ops
    that consume them. backward() walks the records exactly once, in
    reverse, skipping records whose output never received a gradient.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, Callable[[], None]]] = []

    def __len__(self) -> int:
        return len(self._records)

    def record(self, output: Tensor, backward_fn: Callable[[], None]) -> None:
        self._records.append((output, backward_fn))

    def backward(self, root: Tensor) -> None:
        if root.data.size != 1:
            raise ShapeError(f"backward root must be scalar, got shape {root.data.shape}")
        root._accumulate(np.ones_like(root.data))
        for out, fn in reversed(self._records):
            if out.grad is not None:
                fn()

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _TAPE_STACK.pop()


_TAPE_STACK: list[Tape | None] = []


class no_grad:
    """Context manager that suppresses tape recording."""

    def __enter__(self):
        _TAPE_STACK.append(None)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPE_STACK.pop()


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _unbroadcast(g: np.ndarray, target_shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to target_shape, undoing numpy broadcasting."""
    if g.shape == target_shape:
        return g
    while g.ndim > len(target_shape):
        g = g.sum(axis=0)
    for axis, (gs, ts) in enumerate(zip(g.shape, target_shape)):
        if ts == 1 and gs != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(target_shape)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _finish(out: Tensor, inputs: Iterable[Tensor], backward_fn: Callable[[], None]) -> Tensor:
    out.requires_grad = any(t.requires_grad for t in inputs)
    tape = _active_tape()
    if out.requires_grad and tape is not None:
        tape.record(out, backward_fn)
    return out


# ---------------------------------------------------------------------------
# elementwise / structural primitives


def add(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data)

    def bw():
        if a.requires_grad:
            a._accumulate(out.grad)
        if b.requires_grad:
            b._accumulate(out.grad)

    return _finish(out, (a, b), bw)


def sub(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data)

    def bw():
        if a.requires_grad:
            a._accumulate(out.grad)
        if b.requires_grad:
            b._accumulate(-out.grad)

    return _finish(out, (a, b), bw)


def mul(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data)

    def bw():
        if a.requires_grad:
            a._accumulate(out.grad * b.data)
        if b.requires_grad:
            b._accumulate(out.grad * a.data)

    return _finish(out, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)

    def bw():
        if a.requires_grad:
            a._accumulate(-out.grad)

    return _finish(out, (a,), bw)


def power(a: Tensor, p: float) -> Tensor:
    p = float(p)
    out = Tensor(a.data**p)

    def bw():
        if a.requires_grad:
            a._accumulate(out.grad * p * a.data ** (p - 1.0))

    return _finish(out, (a,), bw)


def exp(a: Tensor) -> Tensor:
    out = Tensor(np.exp(a.data))

    def bw():
        if a.requires_grad:
            a._accumulate(out.grad * out.data)

    return _finish(out, (a,), bw)


def log(a: Tensor) -> Tensor:
    out = Tensor(np.log(a.data))

    def bw():
        if a.requires_grad:
            a._accumulate(out.grad / a.data)

    return _finish(out, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.data))

    def bw():
        if a.requires_grad:
            a._accumulate(out.grad * (1.0 - out.data * out.data))

    return _finish(out, (a,), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes do not conform: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data)

    def bw():
        if a.requires_grad:
            a._accumulate(out.grad @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ out.grad)

    return _finish(out, (a, b), bw)


def transpose(a: Tensor) -> Tensor:
    out = Tensor(a.data.T.copy())

    def bw():
        if a.requires_grad:
            a._accumulate(out.grad.T)

    return _finish(out, (a,), bw)


def tsum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def bw():
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        if a.requires_grad:
            a._accumulate(np.broadcast_to(g, a.data.shape))

    return _finish(out, (a,), bw)


def tmean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims))

    def bw():
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        if a.requires_grad:
            a._accumulate(np.broadcast_to(g, a.data.shape) / count)

    return _finish(out, (a,), bw)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat of zero tensors")
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    sizes = [p.data.shape[axis] for p in parts]

    def bw():
        offset = 0
        for p, size in zip(parts, sizes):
            if p.requires_grad:
                idx = [slice(None)] * out.grad.ndim
                idx[axis] = slice(offset, offset + size)
                p._accumulate(out.grad[tuple(idx)])
            offset += size

    return _finish(out, parts, bw)


def narrow(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out = Tensor(a.data[idx].copy())

    def bw():
        if a.requires_grad:
            g = np.zeros_like(a.data)
            g[idx] = out.grad
            a._accumulate(g)

    return _finish(out, (a,), bw)


def gather_rows(table: Tensor, ids: Sequence[int]) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ShapeError(f"row index out of range for table {table.data.shape}: {ids}")
    out = Tensor(table.data[ids])

    def bw():
        if table.requires_grad:
            g = np.zeros_like(table.data)
            np.add.at(g, ids, out.grad)
            table._accumulate(g)

    return _finish(out, (table,), bw)


def pick(a: Tensor, i: int, j: int) -> Tensor:
    """Select one scalar entry of a 2D tensor."""
    out = Tensor(a.data[i, j])

    def bw():
        if a.requires_grad:
            g = np.zeros_like(a.data)
            g[i, j] = out.grad
            a._accumulate(g)

    return _finish(out, (a,), bw)


# ---------------------------------------------------------------------------
# fused numerical primitives


def _mask_array(mask, shape) -> np.ndarray | None:
    if mask is None:
        return None
    m = mask.data if isinstance(mask, Tensor) else np.asarray(mask)
    m = m.astype(bool)
    if m.shape != shape:
        raise ShapeError(f"mask shape {m.shape} does not match input shape {shape}")
    return m


def softmax(x: Tensor, mask=None) -> Tensor:
    """Row-wise softmax, stabilized by row-max subtraction.

    mask marks valid entries (True = keep); masked entries come out exactly 0.
    A fully masked row is an error.
    """
    xd = x.data if x.data.ndim == 2 else x.data.reshape(1, -1)
    squeeze = x.data.ndim == 1
    m = _mask_array(mask, x.data.shape)
    if m is not None and squeeze:
        m = m.reshape(1, -1)
    if m is not None:
        if not m.any(axis=1).all():
            raise DegenerateMaskError("softmax row with all entries masked")
        shifted = np.where(m, xd, -np.inf)
        rowmax = shifted.max(axis=1, keepdims=True)
        e = np.where(m, np.exp(xd - rowmax), 0.0)
    else:
        rowmax = xd.max(axis=1, keepdims=True)
        e = np.exp(xd - rowmax)
    y = e / e.sum(axis=1, keepdims=True)
    out = Tensor(y.reshape(x.data.shape))

    def bw():
        if x.requires_grad:
            g = out.grad.reshape(y.shape)
            dx = y * (g - (g * y).sum(axis=1, keepdims=True))
            x._accumulate(dx.reshape(x.data.shape))

    return _finish(out, (x,), bw)


def log_softmax(x: Tensor, mask=None) -> Tensor:
    """Row-wise log softmax; masked entries come out -inf and get no gradient."""
    xd = x.data if x.data.ndim == 2 else x.data.reshape(1, -1)
    squeeze = x.data.ndim == 1
    m = _mask_array(mask, x.data.shape)
    if m is not None and squeeze:
        m = m.reshape(1, -1)
    if m is not None:
        if not m.any(axis=1).all():
            raise DegenerateMaskError("log_softmax row with all entries masked")
        shifted = np.where(m, xd, -np.inf)
    else:
        shifted = xd
    rowmax = shifted.max(axis=1, keepdims=True)
    e = np.exp(shifted - rowmax)
    if m is not None:
        e = np.where(m, e, 0.0)
    denom = e.sum(axis=1, keepdims=True)
    logp = shifted - rowmax - np.log(denom)
    p = e / denom
    out = Tensor(logp.reshape(x.data.shape))

    def bw():
        if x.requires_grad:
            g = out.grad.reshape(logp.shape)
            if m is not None:
                g = np.where(m, g, 0.0)
            dx = g - p * g.sum(axis=1, keepdims=True)
            x._accumulate(dx.reshape(x.data.shape))

    return _finish(out, (x,), bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ weight + bias with explicit conformance checking."""
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.data.shape[1] != weight.data.shape[0]:
        raise ShapeError(f"linear shapes do not conform: x {x.data.shape} vs weight {weight.data.shape}")
    if bias is not None and bias.data.shape != (weight.data.shape[1],):
        raise ShapeError(f"linear bias shape {bias.data.shape} does not match weight {weight.data.shape}")
    out = matmul(x, weight)
    if bias is not None:
        out = add(out, bias)
    return out


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row zero mean / unit variance, then elementwise affine."""
    if x.data.ndim != 2:
        raise ShapeError(f"layer_norm expects 2D input, got {x.data.shape}")
    if gain.data.shape != (x.data.shape[1],) or shift.data.shape != (x.data.shape[1],):
        raise ShapeError(
            f"layer_norm affine shapes {gain.data.shape}/{shift.data.shape} do not match row width {x.data.shape[1]}"
        )
    mu = tmean(x, axis=1, keepdims=True)
    centered = sub(x, mu)
    var = tmean(mul(centered, centered), axis=1, keepdims=True)
    inv = power(add(var, eps), -0.5)
    return add(mul(mul(centered, inv), gain), shift)


def scaled_dot_attention(
    q: Tensor, k: Tensor, v: Tensor, bias: Tensor | None = None, mask=None
) -> Tensor:
    """softmax(q kᵀ / sqrt(d) + bias, mask) @ v."""
    n, d = q.data.shape
    m = k.data.shape[0]
    if d <= 0 or k.data.shape[1] != d or v.data.shape[0] != m:
        raise ShapeError(
            f"attention shapes do not conform: q {q.data.shape}, k {k.data.shape}, v {v.data.shape}"
        )
    if bias is not None and bias.data.shape != (n, m):
        raise ShapeError(f"attention bias shape {bias.data.shape}, expected {(n, m)}")
    logits = mul(matmul(q, transpose(k)), 1.0 / math.sqrt(d))
    if bias is not None:
        logits = add(logits, bias)
    att = softmax(logits, mask=mask)
    return matmul(att, v)


# ---------------------------------------------------------------------------
# verification harness


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    f re-evaluates the scalar objective from the current parameter values;
    the finite-difference side never touches the tape, so it stays an
    independent oracle of the analytic path.
    """
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        out = f()
        if out.data.size != 1 or not np.isfinite(out.data).all():
            raise EvaluationError(f"objective must be finite scalar, got {out.data!r}")
        tape.backward(out)

    def value() -> float:
        with no_grad():
            r = f()
        if not np.isfinite(r.data).all():
            raise EvaluationError("objective became non-finite during perturbation")
        return float(r.data.reshape(()))

    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        aflat = analytic.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = value()
            flat[i] = orig - h
            fm = value()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            err = abs(aflat[i] - numeric) / max(1.0, abs(aflat[i]))
            if err > worst:
                worst = err
    return worst
