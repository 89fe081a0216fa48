"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations executed while a :class:`Tape` is active are recorded on it when at
least one operand requires a gradient.  ``Tape.backward`` replays the records
in reverse order and accumulates gradients into ``Tensor.grad``.  Outside a
tape every operation is a plain numpy computation, which is what inference and
finite-difference checks use.

Broadcasting is restricted to the two cases the model needs: equal shapes and
scalar-with-tensor.  Row-wise bias addition has its own op (:func:`bias_add`).
Anything else raises :class:`~krf.exceptions.ShapeError`.
"""

from __future__ import annotations

import threading
from typing import Iterable

import numpy as np

from .exceptions import DomainError, KRFError, ShapeError

__all__ = [
    "Tensor",
    "Tape",
    "no_grad_active",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "matmul",
    "tanh",
    "sigmoid",
    "relu",
    "leaky_relu",
    "exp",
    "log",
    "elementwise",
    "softmax",
    "concat",
    "stack",
    "unstack",
    "take",
    "index",
    "reshape",
    "transpose",
    "tensor_sum",
    "mean",
    "bias_add",
    "bce_with_logits",
    "custom_op",
]

_local = threading.local()


def _tape_stack():
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def _active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


def no_grad_active():
    """True when no tape is recording on this thread."""
    return _active_tape() is None


class Tensor:
    """A float64 ndarray plus gradient bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.array(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @classmethod
    def _wrap(cls, arr, requires_grad=False):
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = requires_grad
        t.grad = None
        t.name = None
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self):
        return self.data.shape[0]

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    @property
    def T(self):
        return transpose(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None):
        return tensor_sum(self, axis)


class _Record:
    __slots__ = ("name", "outputs", "inputs", "backward")

    def __init__(self, name, outputs, inputs, backward):
        self.name = name
        self.outputs = outputs
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered log of differentiable operations for one forward pass.

    Use as a context manager; tapes nest and are thread-local::

        with Tape() as tape:
            loss = f(params)
        tape.backward(loss)
    """

    def __init__(self):
        self.records = []
        self.trace = []
        self._consumed = False

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        else:  # pragma: no cover - misuse guard
            raise KRFError("tape stack corrupted: exiting a tape that is not innermost")
        return False

    def __len__(self):
        return len(self.records)

    def record(self, name, outputs, inputs, backward):
        self.records.append(_Record(name, outputs, inputs, backward))

    def backward(self, loss, retain_grads=False):
        """Propagate d(loss)/d(.) to every tensor that requires a gradient.

        Leaf gradients accumulate into ``.grad``; intermediate gradients are
        dropped once used unless ``retain_grads`` is set.  A tape can be
        replayed only once; its records are released afterwards.
        """
        if self._consumed:
            raise KRFError("tape already consumed by a previous backward pass")
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not loss.requires_grad:
            raise KRFError("loss does not depend on any tensor that requires a gradient")
        produced = set()
        for rec in self.records:
            for out in rec.outputs:
                produced.add(id(out))
        grads = {id(loss): np.ones_like(loss.data)}
        self.trace = []
        for pos in range(len(self.records) - 1, -1, -1):
            rec = self.records[pos]
            gouts = [grads.pop(id(o), None) for o in rec.outputs]
            self.trace.append(pos)
            if all(g is None for g in gouts):
                continue
            if len(rec.outputs) == 1:
                gin = rec.backward(gouts[0])
            else:
                gin = rec.backward(gouts)
            if retain_grads:
                for o, g in zip(rec.outputs, gouts):
                    if g is not None:
                        o.grad = g
            for inp, g in zip(rec.inputs, gin):
                if g is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in produced:
                    prev = grads.get(key)
                    grads[key] = g if prev is None else prev + g
                else:
                    inp.grad = g.copy() if inp.grad is None else inp.grad + g
        self.records = []
        self._consumed = True


def custom_op(name, arr, inputs, backward):
    """Wrap a hand-written kernel: ``backward(g)`` returns one gradient per input."""
    return _result(name, arr, tuple(inputs), backward)


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _result(name, arr, inputs, backward):
    tape = _active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(arr, needs)
    if needs:
        tape.record(name, (out,), tuple(inputs), backward)
    return out


def _results(name, arrs, inputs, backward):
    tape = _active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    outs = tuple(Tensor._wrap(a, needs) for a in arrs)
    if needs:
        tape.record(name, outs, tuple(inputs), backward)
    return list(outs)


def _pair(a, b, opname):
    a = as_tensor(a)
    b = as_tensor(b)
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise ShapeError(
            f"{opname}: shapes {a.shape} and {b.shape} are neither equal nor scalar-with-tensor"
        )
    return a, b


def _fit(g, shape):
    # gradient of a scalar operand broadcast against a tensor
    if g.shape == shape:
        return g
    return np.asarray(g.sum()).reshape(shape)


def add(a, b):
    a, b = _pair(a, b, "add")
    sa, sb = a.shape, b.shape
    return _result("add", a.data + b.data, (a, b), lambda g: (_fit(g, sa), _fit(g, sb)))


def sub(a, b):
    a, b = _pair(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _result("sub", a.data - b.data, (a, b), lambda g: (_fit(g, sa), _fit(-g, sb)))


def mul(a, b):
    a, b = _pair(a, b, "mul")
    ad, bd = a.data, b.data
    sa, sb = a.shape, b.shape
    return _result("mul", ad * bd, (a, b), lambda g: (_fit(g * bd, sa), _fit(g * ad, sb)))


def matmul(a, b):
    """Matrix product of 2-D operands, or batched over equal leading dims.

    A 3-D left operand may also multiply a shared 2-D right operand.
    """
    a, b = as_tensor(a), as_tensor(b)
    ok = a.ndim >= 2 and b.ndim >= 2 and a.shape[-1] == b.shape[-2]
    if ok and b.ndim > 2:
        ok = a.ndim == b.ndim and a.shape[:-2] == b.shape[:-2]
    if not ok:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        if bd.ndim == 2 and ad.ndim > 2:
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(ad, -1, -2) @ g
        return ga, gb

    return _result("matmul", ad @ bd, (a, b), backward)


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _result("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(z):
    # tanh form: no overflow, and sigmoid(x) + sigmoid(-x) == 1 up to rounding
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def sigmoid(x):
    x = as_tensor(x)
    y = _sigmoid(x.data)
    return _result("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def relu(x):
    x = as_tensor(x)
    pos = x.data > 0
    return _result("relu", np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,))


def leaky_relu(x, slope=0.01):
    x = as_tensor(x)
    factor = np.where(x.data > 0, 1.0, slope)
    return _result("leaky_relu", x.data * factor, (x,), lambda g: (g * factor,))


def exp(x):
    x = as_tensor(x)
    y = np.exp(x.data)
    return _result("exp", y, (x,), lambda g: (g * y,))


def log(x):
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise DomainError("log: input contains non-positive values")
    xd = x.data
    return _result("log", np.log(xd), (x,), lambda g: (g / xd,))


_UNARY = {
    "tanh": tanh,
    "sigmoid": sigmoid,
    "relu": relu,
    "exp": exp,
    "log": log,
}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(op, *operands, slope=0.01):
    """Dispatch an elementwise op by name (``leaky_relu`` takes ``slope``)."""
    if op in _BINARY:
        if len(operands) != 2:
            raise TypeError(f"{op} takes two operands")
        return _BINARY[op](*operands)
    if len(operands) != 1:
        raise TypeError(f"{op} takes one operand")
    if op == "leaky_relu":
        return leaky_relu(operands[0], slope)
    if op in _UNARY:
        return _UNARY[op](operands[0])
    raise ValueError(f"unknown elementwise op {op!r}")


def softmax(x, axis=-1):
    x = as_tensor(x)
    if not -x.ndim <= axis < max(x.ndim, 1):
        raise ShapeError(f"softmax: axis {axis} out of range for shape {x.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _result("softmax", y, (x,), backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: nothing to concatenate")
    ref = tensors[0].shape
    ax = axis % len(ref) if ref else 0
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
            d1 != d2 for i, (d1, d2) in enumerate(zip(ref, t.shape)) if i != ax
        ):
            raise ShapeError(f"concat: shapes {ref} and {t.shape} differ off axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _result("concat", np.concatenate([t.data for t in tensors], axis=ax), tensors, backward)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != ref:
            raise ShapeError(f"stack: shapes {ref} and {t.shape} differ")
    n = len(tensors)

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0)[i] for i in range(n))

    return _result("stack", np.stack([t.data for t in tensors], axis=axis), tensors, backward)


def unstack(x, axis=0):
    """Split ``x`` along ``axis`` into a list of tensors (one tape record)."""
    x = as_tensor(x)
    moved = np.moveaxis(x.data, axis, 0)
    parts = [moved[i] for i in range(moved.shape[0])]

    def backward(gs):
        filled = [np.zeros_like(parts[0]) if g is None else g for g in gs]
        return (np.stack(filled, axis=axis),)

    return _results("unstack", parts, (x,), backward)


def take(table, indices):
    """Gather rows ``table[indices]``; gradients scatter-add back."""
    table = as_tensor(table)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(f"take: index out of range for table with {table.shape[0]} rows")
    shape = table.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, idx.reshape(-1), g.reshape((-1,) + shape[1:]))
        return (out,)

    return _result("take", table.data[idx], (table,), backward)


def index(x, key):
    """Basic (slice / integer) indexing."""
    x = as_tensor(x)
    shape = x.shape

    def backward(g):
        out = np.zeros(shape)
        out[key] = g
        return (out,)

    return _result("index", x.data[key], (x,), backward)


def reshape(x, shape):
    x = as_tensor(x)
    orig = x.shape
    try:
        y = x.data.reshape(shape)
    except ValueError as err:
        raise ShapeError(f"reshape: cannot view {orig} as {tuple(shape)}") from err
    return _result("reshape", y, (x,), lambda g: (g.reshape(orig),))


def transpose(x, axes=None):
    x = as_tensor(x)
    inv = None if axes is None else np.argsort(axes)
    return _result("transpose", np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def tensor_sum(x, axis=None):
    x = as_tensor(x)
    shape = x.shape

    def backward(g):
        if axis is None:
            return (np.full(shape, float(g)),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _result("sum", np.asarray(x.data.sum(axis=axis)), (x,), backward)


def mean(x):
    x = as_tensor(x)
    shape, n = x.shape, x.size
    return _result("mean", np.asarray(x.data.mean()), (x,), lambda g: (np.full(shape, float(g) / n),))


def bias_add(x, b):
    """``x + b`` with ``b`` broadcast along the last axis of ``x``."""
    x, b = as_tensor(x), as_tensor(b)
    if b.ndim != 1 or x.ndim < 1 or x.shape[-1] != b.shape[0]:
        raise ShapeError(f"bias_add: bias {b.shape} does not match last axis of {x.shape}")
    k = b.shape[0]
    return _result("bias_add", x.data + b.data, (x, b), lambda g: (g, g.reshape(-1, k).sum(axis=0)))


def bce_with_logits(scores, targets):
    """Elementwise binary cross-entropy of ``sigmoid(scores)`` against 0/1 targets.

    Evaluated as ``max(s, 0) - s*y + log(1 + exp(-|s|))`` so large logits stay finite.
    """
    scores = as_tensor(scores)
    y = np.asarray(targets.data if isinstance(targets, Tensor) else targets, dtype=np.float64)
    if y.shape != scores.shape:
        raise ShapeError(f"bce_with_logits: scores {scores.shape} vs targets {y.shape}")
    s = scores.data
    out = np.maximum(s, 0.0) - s * y + np.log1p(np.exp(-np.abs(s)))
    p = _sigmoid(s)
    return _result("bce_with_logits", out, (scores,), lambda g: (g * (p - y),))


def parameters_grad_norm(tensors: Iterable[Tensor]) -> float:
    total = 0.0
    for t in tensors:
        if t.grad is not None:
            total += float(np.sum(t.grad * t.grad))
    return float(np.sqrt(total))


def sigmoid_array(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function on raw arrays."""
    return _sigmoid(np.asarray(z, dtype=np.float64))

