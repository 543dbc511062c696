"""A small reverse-mode automatic differentiation engine on numpy arrays.

Only what the estimator needs: elementwise arithmetic with numpy
broadcasting, matmul, reductions, gathers/scatters along a node axis, a few
activations, a masked softmax and absolute-error losses.  Everything is
float64.

Gradients are accumulated into ``.grad`` of leaf tensors created with
``requires_grad=True``.  Intermediate gradients live only for the duration
of :meth:`Tensor.backward`.
"""

from __future__ import annotations

import contextlib
import json
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import CorruptFileError, ValidationError

__all__ = [
    "Tensor",
    "no_grad",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "matmul",
    "concat",
    "stack",
    "reshape",
    "transpose",
    "tsum",
    "mean",
    "absolute",
    "sigmoid",
    "leaky_relu",
    "relu1",
    "gather",
    "scatter_add",
    "masked_softmax",
    "mae",
    "sum_abs_error",
    "Adam",
    "save_checkpoint",
    "load_checkpoint",
]

_GRAD = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (inference only)."""
    global _GRAD
    prev, _GRAD = _GRAD, False
    try:
        yield
    finally:
        _GRAD = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self.name = name

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValidationError(f"item() needs a single element, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    # operators
    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, o):
        return matmul(self, o)

    def __getitem__(self, key):
        return _getitem(self, key)

    def backward(self):
        """Populate ``.grad`` of every leaf reachable from this scalar."""
        if self.size != 1:
            raise ValidationError("backward() needs a scalar output")
        tape = _topological(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(tape):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def _topological(root: Tensor) -> list[Tensor]:
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
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    if _GRAD and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _check_broadcast(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValidationError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _result(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _result(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return _result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def absolute(a) -> Tensor:
    a = as_tensor(a)
    return _result(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = expit(a.data)
    return _result(s, (a,), lambda g: (g * s * (1.0 - s),))


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    """Leaky ReLU; at exactly 0 the left slope applies."""
    a = as_tensor(a)
    pos = a.data > 0
    return _result(np.where(pos, a.data, slope * a.data), (a,), lambda g: (g * np.where(pos, 1.0, slope),))


def relu1(a) -> Tensor:
    """``min(max(x, 0), 1)``.  Left derivative at both kinks: 0 at x=0, 1 at x=1."""
    a = as_tensor(a)
    slope = ((a.data > 0) & (a.data <= 1)).astype(np.float64)
    return _result(np.clip(a.data, 0.0, 1.0), (a,), lambda g: (g * slope,))


# ---------------------------------------------------------------------------
# shape ops and reductions


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def _getitem(a: Tensor, key) -> Tensor:
    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        return (full,)

    return _result(a.data[key], (a,), back)


def transpose(a) -> Tensor:
    """Swap the last two axes."""
    a = as_tensor(a)
    return _result(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), back)


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis), 1.0 / n)


def concat(tensors, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _result(np.concatenate([t.data for t in ts], axis=axis), tuple(ts), lambda g: tuple(np.split(g, sizes, axis=axis)))


def stack(tensors, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in ts], axis=axis)
    n = len(ts)
    return _result(out, tuple(ts), lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


def matmul(a, b) -> Tensor:
    """Matrix product with numpy semantics, including 1-D promotion."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise ValidationError("matmul needs at least 1-D operands")
    a2 = reshape(a, (1, -1)) if a.ndim == 1 else a
    b2 = reshape(b, (-1, 1)) if b.ndim == 1 else b
    if a2.shape[-1] != b2.shape[-2]:
        raise ValidationError(f"matmul: inner dimensions {a.shape} @ {b.shape} differ")
    out = _result(
        a2.data @ b2.data,
        (a2, b2),
        lambda g: (
            _unbroadcast(g @ np.swapaxes(b2.data, -1, -2), a2.shape),
            _unbroadcast(np.swapaxes(a2.data, -1, -2) @ g, b2.shape),
        ),
    )
    if b.ndim == 1:
        out = reshape(out, out.shape[:-1])
    if a.ndim == 1:
        shape = out.shape[:-2] + out.shape[-1:] if b.ndim > 1 else out.shape[:-1]
        out = reshape(out, shape)
    return out


def gather(a, idx: np.ndarray, axis: int = -1) -> Tensor:
    """``np.take(a, idx, axis)`` with a scatter-add backward."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(np.moveaxis(full, axis, 0), idx, np.moveaxis(g, axis, 0))
        return (full,)

    return _result(np.take(a.data, idx, axis=axis), (a,), back)


def scatter_add(a, idx: np.ndarray, n: int, axis: int = -1) -> Tensor:
    """Sum slices of ``a`` along ``axis`` into ``n`` buckets given by ``idx``."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    if a.shape[axis] != len(idx):
        raise ValidationError("scatter_add: index length does not match the axis")
    shape = list(a.shape)
    shape[axis] = n
    out = np.zeros(shape)
    np.add.at(np.moveaxis(out, axis, 0), idx, np.moveaxis(a.data, axis, 0))
    return _result(out, (a,), lambda g: (np.take(g, idx, axis=axis),))


def masked_softmax(e, mask) -> Tensor:
    """Softmax over the last axis of ``e + mask``.

    ``mask`` is a constant array of 0 / -inf entries.  Masked positions are
    exactly 0 in the output; a row with every entry masked is all zeros.
    """
    e = as_tensor(e)
    mask = np.asarray(mask, dtype=np.float64)
    _check_broadcast(e, Tensor(mask), "masked_softmax")
    z = e.data + mask
    valid = np.isfinite(z)
    zm = np.where(valid, z, -np.inf)
    m = zm.max(axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    ex = np.where(valid, np.exp(np.where(valid, z, 0.0) - m), 0.0)
    s = ex.sum(axis=-1, keepdims=True)
    out = np.divide(ex, s, out=np.zeros_like(ex), where=s > 0)

    def back(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return (_unbroadcast(out * (g - inner), e.shape),)

    return _result(out, (e,), back)


def mae(pred, target) -> Tensor:
    """Mean absolute error over all entries."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ValidationError(f"mae: shapes {pred.shape} and {target.shape} differ")
    return mean(absolute(sub(pred, target)))


def sum_abs_error(pred, target) -> Tensor:
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ValidationError(f"loss: shapes {pred.shape} and {target.shape} differ")
    return tsum(absolute(sub(target, pred)))


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Adaptive moment estimation with bias correction."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_MAGIC = "dysuse-checkpoint"
CHECKPOINT_VERSION = "v1"


def save_checkpoint(path, params: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named arrays as text with 17 significant digits (bit-faithful)."""
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}"]
    for key, value in (meta or {}).items():
        lines.append(f"meta {key} {json.dumps(value, sort_keys=True)}")
    for name, arr in params.items():
        arr = np.asarray(arr, dtype=np.float64)
        lines.append(f"param {name} {arr.ndim} " + " ".join(str(d) for d in arr.shape))
        lines.append(" ".join(f"{x:.17g}" for x in arr.ravel().tolist()))
    lines.append(f"end {len(params)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a checkpoint; returns ``(meta, params)``."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(CHECKPOINT_MAGIC):
        raise CorruptFileError(f"{path}: not a checkpoint")
    if lines[0].split()[1:] != [CHECKPOINT_VERSION]:
        raise CorruptFileError(f"{path}: unsupported checkpoint version {lines[0]!r}")
    meta, params = {}, {}
    i = 1
    try:
        while i < len(lines):
            line = lines[i]
            if line.startswith("meta "):
                _, key, raw = line.split(" ", 2)
                meta[key] = json.loads(raw)
                i += 1
            elif line.startswith("param "):
                parts = line.split()
                name, ndim = parts[1], int(parts[2])
                shape = tuple(int(d) for d in parts[3 : 3 + ndim])
                vals = [float(x) for x in lines[i + 1].split()] if i + 1 < len(lines) else []
                if len(vals) != int(np.prod(shape)):
                    raise CorruptFileError(f"{path}: parameter {name} is truncated")
                params[name] = np.array(vals, dtype=np.float64).reshape(shape)
                i += 2
            elif line.startswith("end "):
                if int(line.split()[1]) != len(params):
                    raise CorruptFileError(f"{path}: parameter count mismatch")
                return meta, params
            else:
                raise CorruptFileError(f"{path}: unexpected line {i + 1}")
    except (ValueError, IndexError) as exc:
        if isinstance(exc, CorruptFileError):
            raise
        raise CorruptFileError(f"{path}: {exc}") from None
    raise CorruptFileError(f"{path}: missing end marker (truncated file)")
