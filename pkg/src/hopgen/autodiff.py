"""Dense tensors with reverse-mode differentiation on a dynamic tape.

Values are numpy arrays (f32 by default, f64 for gradient checking).
Every op records its parents and a closure that pushes the adjoint back;
`Tensor.backward()` walks the tape in reverse topological order.
Broadcasting follows numpy; broadcast axes are summed out on the way back.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


def _shape_fail(op: str, *shapes) -> None:
    raise ShapeError("%s: incompatible shapes %s" % (op, " vs ".join(str(s) for s in shapes)))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the differentiation tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None,
                 _parents: tuple = (), _backward: Callable | None = None, op: str = "leaf"):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward
        self.op = op

    # -- plumbing ---------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, op="detach")

    def __repr__(self):
        return "Tensor(shape=%s, op=%s, requires_grad=%s)" % (self.shape, self.op, self.requires_grad)

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self, seed: np.ndarray | None = None) -> None:
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed requires a scalar output")
            seed = np.ones_like(self.data)
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self._accumulate(np.asarray(seed, dtype=self.data.dtype).reshape(self.data.shape))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def zero_grad(self) -> None:
        self.grad = None

    # -- operator sugar ---------------------------------------------------

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def __add__(self, other):
        return add(self, self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, self._coerce(other))

    def __rsub__(self, other):
        return sub(self._coerce(other), self)

    def __mul__(self, other):
        return mul(self, self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, self._coerce(other))

    def __neg__(self):
        return mul(self, Tensor(np.asarray(-1.0, dtype=self.data.dtype)))

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def tensor(data, requires_grad: bool = False, dtype=np.float32) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


# -- elementwise arithmetic ----------------------------------------------


def _binary(a: Tensor, b: Tensor, out: np.ndarray, da, db, op: str) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(da(g), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(db(g), b.shape))

    return Tensor(out, _parents=(a, b), _backward=backward, op=op)


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError:
        _shape_fail("add", a.shape, b.shape)
    return _binary(a, b, out, lambda g: g, lambda g: g, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data - b.data
    except ValueError:
        _shape_fail("sub", a.shape, b.shape)
    return _binary(a, b, out, lambda g: g, lambda g: -g, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError:
        _shape_fail("mul", a.shape, b.shape)
    return _binary(a, b, out, lambda g: g * b.data, lambda g: g * a.data, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data / b.data
    except ValueError:
        _shape_fail("div", a.shape, b.shape)
    return _binary(a, b, out, lambda g: g / b.data,
                   lambda g: -g * a.data / (b.data * b.data), "div")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        _shape_fail("matmul", a.shape, b.shape)
    out = a.data @ b.data

    def backward(g):
        if a.data.ndim == 1 and b.data.ndim == 1:
            if a.requires_grad:
                a._accumulate(g * b.data)
            if b.requires_grad:
                b._accumulate(g * a.data)
            return
        if a.requires_grad:
            if b.data.ndim == 1:
                ga = g[..., None] * b.data
            else:
                ga = g @ np.swapaxes(b.data, -1, -2)
            a._accumulate(_unbroadcast(np.asarray(ga), a.shape))
        if b.requires_grad:
            if a.data.ndim == 1:
                gb = np.outer(a.data, g)
            elif b.data.ndim == 1:
                gb = np.swapaxes(a.data, -1, -2) @ g if a.data.ndim == 2 else \
                    np.einsum("...ij,...i->j", a.data, g)
            else:
                gb = np.swapaxes(a.data, -1, -2) @ g
            b._accumulate(_unbroadcast(np.asarray(gb), b.shape))

    return Tensor(out, _parents=(a, b), _backward=backward, op="matmul")


# -- nonlinearities -------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = np.where(mask, x.data, 0.0)

    def backward(g):
        x._accumulate(g * mask)

    return Tensor(out, _parents=(x,), _backward=backward, op="relu")


def sigmoid(x: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-x.data))

    def backward(g):
        x._accumulate(g * out * (1.0 - out))

    return Tensor(out, _parents=(x,), _backward=backward, op="sigmoid")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backward(g):
        x._accumulate(g * (1.0 - out * out))

    return Tensor(out, _parents=(x,), _backward=backward, op="tanh")


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximate GELU (the GPT-2 variant)."""
    x3 = x.data ** 3
    inner = _GELU_C * (x.data + 0.044715 * x3)
    t = np.tanh(inner)
    out = 0.5 * x.data * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x.data ** 2)
        dx = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * dinner
        x._accumulate(g * dx)

    return Tensor(out, _parents=(x,), _backward=backward, op="gelu")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def backward(g):
        x._accumulate(g * out)

    return Tensor(out, _parents=(x,), _backward=backward, op="exp")


def log(x: Tensor, floor: float = 0.0) -> Tensor:
    """Natural log; with `floor` > 0 the argument is clamped below at `floor`
    (gradient is zero on the clamped region)."""
    arg = np.maximum(x.data, floor) if floor > 0.0 else x.data
    out = np.log(arg)

    def backward(g):
        grad = g / arg
        if floor > 0.0:
            grad = np.where(x.data < floor, 0.0, grad)
        x._accumulate(grad)

    return Tensor(out, _parents=(x,), _backward=backward, op="log")


# -- reductions -----------------------------------------------------------


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            x._accumulate(np.broadcast_to(g, x.shape).copy())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(gg, x.shape).copy())

    return Tensor(out, _parents=(x,), _backward=backward, op="sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else x.data.shape[axis]
    out = x.data.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            x._accumulate(np.broadcast_to(g / n, x.shape).copy())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(gg / n, x.shape).copy())

    return Tensor(out, _parents=(x,), _backward=backward, op="mean")


def max_(x: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    """Max reduction; the gradient is routed to the first argmax element."""
    idx = np.argmax(x.data, axis=axis)
    out = np.take_along_axis(x.data, np.expand_dims(idx, axis), axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def backward(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        grad = np.zeros_like(x.data)
        np.put_along_axis(grad, np.expand_dims(idx, axis), gg, axis=axis)
        x._accumulate(grad)

    return Tensor(out, _parents=(x,), _backward=backward, op="max")


# -- shape manipulation ---------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out = x.data.reshape(shape)

    def backward(g):
        x._accumulate(g.reshape(x.shape))

    return Tensor(out, _parents=(x,), _backward=backward, op="reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    out = np.transpose(x.data, axes)
    inv = None if axes is None else np.argsort(axes)

    def backward(g):
        x._accumulate(np.transpose(g, inv))

    return Tensor(out, _parents=(x,), _backward=backward, op="transpose")


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = list(parts)
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                p._accumulate(g[tuple(sl)])

    return Tensor(out, _parents=tuple(parts), _backward=backward, op="concat")


def stack(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = list(parts)
    out = np.stack([p.data for p in parts], axis=axis)

    def backward(g):
        for i, p in enumerate(parts):
            if p.requires_grad:
                p._accumulate(np.take(g, i, axis=axis))

    return Tensor(out, _parents=tuple(parts), _backward=backward, op="stack")


def gather(x: Tensor, indices) -> Tensor:
    """Row lookup along axis 0 (embedding lookup); rows may repeat."""
    idx = np.asarray(indices, dtype=np.int64)
    out = x.data[idx]

    def backward(g):
        grad = np.zeros_like(x.data)
        np.add.at(grad, idx, g)
        x._accumulate(grad)

    return Tensor(out, _parents=(x,), _backward=backward, op="gather")


# -- structured ops -------------------------------------------------------


def softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along `axis`; `mask` entries are additive 0 / -inf flags."""
    z = x.data if mask is None else x.data + mask
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        x._accumulate(out * (g - dot))

    return Tensor(out, _parents=(x,), _backward=backward, op="softmax")


def log_softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    z = x.data if mask is None else x.data + mask
    z = z - np.max(z, axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    sm = np.exp(out)

    def backward(g):
        x._accumulate(g - sm * g.sum(axis=axis, keepdims=True))

    return Tensor(out, _parents=(x,), _backward=backward, op="log_softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale-shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data
    n = x.data.shape[-1]

    def backward(g):
        if gain.requires_grad:
            gain._accumulate(_unbroadcast(g * xhat, gain.shape))
        if bias.requires_grad:
            bias._accumulate(_unbroadcast(g, bias.shape))
        if x.requires_grad:
            gx = g * gain.data
            term = gx - gx.mean(axis=-1, keepdims=True) \
                - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(term * inv)
        _ = n

    return Tensor(out, _parents=(x, gain, bias), _backward=backward, op="layer_norm")


def dropout(x: Tensor, p: float = 0.0, rng: np.random.Generator | None = None,
            training: bool = False) -> Tensor:
    """Inverted dropout; identity unless training with p > 0."""
    if not training or p <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode requires an rng")
    keep = (rng.random(x.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    out = x.data * keep

    def backward(g):
        x._accumulate(g * keep)

    return Tensor(out, _parents=(x,), _backward=backward, op="dropout")


def cross_entropy(logits: Tensor, targets, mask: np.ndarray | None = None) -> Tensor:
    """Mean NLL of integer `targets` under softmax(logits); rows with
    mask == 0 are excluded from the mean."""
    tgt = np.asarray(targets, dtype=np.int64)
    lsm = log_softmax(logits, axis=-1)
    rows = np.arange(tgt.shape[0])
    picked = Tensor(
        lsm.data[rows, tgt],
        _parents=(lsm,),
        _backward=lambda g, _rows=rows, _tgt=tgt: lsm._accumulate(
            _scatter_rows(np.zeros_like(lsm.data), _rows, _tgt, g)),
        op="pick",
    )
    if mask is not None:
        m = np.asarray(mask, dtype=logits.data.dtype)
        total = mul(picked, Tensor(m)).sum()
        denom = float(m.sum()) if m.sum() > 0 else 1.0
        return -total / denom
    return -picked.mean()


def _scatter_rows(buf, rows, cols, vals):
    buf[rows, cols] = vals
    return buf


def segment_max(values: Tensor, segment_ids, num_segments: int) -> tuple[Tensor, np.ndarray]:
    """Per-segment max over a 1-D value vector. Every segment must be
    nonempty. Returns (maxima, argmax value-indices); gradient goes to the
    first argmax in each segment."""
    ids = np.asarray(segment_ids, dtype=np.int64)
    arg = np.full(num_segments, -1, dtype=np.int64)
    best = np.full(num_segments, -np.inf, dtype=values.data.dtype)
    for i, s in enumerate(ids):
        if values.data[i] > best[s]:
            best[s] = values.data[i]
            arg[s] = i
    if np.any(arg < 0):
        raise ValueError("segment_max: empty segment")

    def backward(g):
        grad = np.zeros_like(values.data)
        np.add.at(grad, arg, g)
        values._accumulate(grad)

    return Tensor(best, _parents=(values,), _backward=backward, op="segment_max"), arg


def segment_mean(values: Tensor, segment_ids, num_segments: int) -> Tensor:
    """Per-segment mean over a 1-D value vector; every segment nonempty."""
    ids = np.asarray(segment_ids, dtype=np.int64)
    counts = np.bincount(ids, minlength=num_segments).astype(values.data.dtype)
    if np.any(counts == 0):
        raise ValueError("segment_mean: empty segment")
    sums = np.zeros(num_segments, dtype=values.data.dtype)
    np.add.at(sums, ids, values.data)
    out = sums / counts

    def backward(g):
        values._accumulate((g / counts)[ids])

    return Tensor(out, _parents=(values,), _backward=backward, op="segment_mean")


# -- gradient checking ----------------------------------------------------


def grad_check(f: Callable[[Sequence[Tensor]], Tensor], inputs: Sequence[Tensor],
               eps: float = 1e-6, tolerance: float = 1e-5,
               kink_guard: bool = False) -> dict:
    """Compare reverse-mode gradients of the scalar function `f` against
    central finite differences.

    With `kink_guard`, elements whose magnitude is below 10*eps are skipped
    (subgradient points of relu/max-like ops are not finitely differentiable).
    Returns {"max_rel_error", "per_input", "passed", "checked"}.
    """
    inputs = list(inputs)
    for x in inputs:
        x.zero_grad()
    out = f(inputs)
    if not np.all(np.isfinite(out.data)):
        raise FloatingPointError("grad_check: non-finite function value")
    out.backward()
    analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in inputs]

    per_input = []
    worst = 0.0
    checked = 0
    for k, x in enumerate(inputs):
        flat = x.data.reshape(-1)
        err_k = 0.0
        for i in range(flat.size):
            if kink_guard and abs(flat[i]) < 10.0 * eps:
                continue
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f(inputs).data)
            flat[i] = orig - eps
            lo = float(f(inputs).data)
            flat[i] = orig
            if not (math.isfinite(hi) and math.isfinite(lo)):
                raise FloatingPointError("grad_check: non-finite perturbed value")
            fd = (hi - lo) / (2.0 * eps)
            an = float(analytic[k].reshape(-1)[i])
            rel = abs(an - fd) / max(abs(an), abs(fd), 1.0)
            err_k = max(err_k, rel)
            checked += 1
        per_input.append(err_k)
        worst = max(worst, err_k)
    return {"max_rel_error": worst, "per_input": per_input,
            "passed": worst < tolerance, "checked": checked}
