"""Dense tensors with reverse-mode automatic differentiation.

The engine is define-by-run: every differentiable operation appends a node to
the active gradient tape as it executes. Execution order is a topological
order, so ``backward`` simply walks the tape in reverse, accumulating
gradients in a fixed order (repeated runs are bit-identical). A tape is spent
by its backward pass; tensors recorded on a spent tape cannot feed new ops.
"""

import numpy as np

from . import config
from .errors import ContractError, NumericError, ShapeError

_active_tape = None
_grad_enabled = True
_tape_counter = 0


class Tape:
    """Ordered record of differentiable ops, consumed by one backward pass."""

    def __init__(self):
        global _tape_counter
        _tape_counter += 1
        self.id = _tape_counter
        self.nodes = []  # (output Tensor, backward closure)
        self.spent = False


def active_tape():
    """The tape currently recording, creating one if needed."""
    global _active_tape
    if _active_tape is None:
        _active_tape = Tape()
    return _active_tape


def reset_tape():
    """Discard the active tape without running backward."""
    global _active_tape
    _active_tape = None


class no_grad:
    """Context manager that suspends tape recording."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev


class Tensor:
    """N-dimensional value array, optionally tracked on the gradient tape.

    ``requires_grad`` leaves (parameters) accumulate into ``.grad`` during
    backward; intermediate results are tracked automatically. Data is stored
    in the profile scalar type (float64 by default, see :mod:`trivol.config`).
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "tape_id")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data)
        dt = config.default_dtype()
        if arr.dtype != dt:
            arr = arr.astype(dt)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self.tape_id = None  # set when an op on a tape produced this tensor

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(()))

    def numpy(self):
        return self.data

    def detach(self):
        """A constant tensor sharing this tensor's values."""
        return Tensor(self.data)

    def is_leaf(self):
        return self.requires_grad and self.tape_id is None

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        name = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{flag}{name})"

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -as_tensor(other))

    def __rsub__(self, other):
        return add(as_tensor(other), -self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not supported; multiply by a reciprocal")
        return mul(self, 1.0 / float(other))

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, key):
        return getitem(self, key)

    # -- elementwise/reduction shorthands -------------------------------------

    def exp(self):
        return exp(self)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def softplus(self):
        return softplus(self)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis, keepdims)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(data, name=None):
    """A leaf tensor that accumulates gradients."""
    return Tensor(data, requires_grad=True, name=name)


def zero_grads(tensors):
    for t in tensors:
        t.grad = None


# -- op recording -------------------------------------------------------------


def _check_finite(arr, op_name):
    if config.validate_finite() and not np.isfinite(arr).all():
        raise NumericError(f"{op_name} produced non-finite values")


def record(op_name, out_data, inputs, backward_fn):
    """Wrap ``out_data`` in a Tensor, recording ``backward_fn`` when tracked.

    ``backward_fn(grad_out)`` must accumulate into the tracked inputs via
    :func:`accumulate`. Inputs recorded on a previous (spent) tape are
    rejected: one training step owns exactly one tape.
    """
    _check_finite(out_data, op_name)
    tracked = _grad_enabled and any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.name = None
    out.requires_grad = tracked
    out.tape_id = None
    if tracked:
        tape = active_tape()
        for t in inputs:
            if t.tape_id is not None and t.tape_id != tape.id:
                raise ContractError(
                    f"{op_name}: input was produced under a different tape; "
                    "tensors do not survive across backward passes"
                )
        out.tape_id = tape.id
        tape.nodes.append((out, backward_fn))
    return out


def accumulate(t, grad):
    """Add ``grad`` into ``t.grad`` (no-op for untracked tensors).

    Gradient arrays are never mutated in place anywhere in the engine, so
    storing a view here is safe and avoids a copy.
    """
    if not t.requires_grad:
        return
    t.grad = grad if t.grad is None else t.grad + grad


def backward(loss):
    """Reverse sweep from a scalar loss; populates ``.grad`` on every leaf.

    Consumes the active tape: a second backward without new recorded work
    raises :class:`ContractError`.
    """
    global _active_tape
    if not isinstance(loss, Tensor):
        raise ContractError("backward expects a Tensor loss")
    if loss.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.shape}")
    tape = _active_tape
    if tape is None or tape.spent or loss.tape_id != tape.id:
        raise ContractError("loss is not on the active tape (was backward already run?)")
    loss.grad = np.ones_like(loss.data)
    for out, fn in reversed(tape.nodes):
        if out.grad is not None:
            fn(out.grad)
    # free intermediate gradients; leaves keep theirs
    for out, _ in tape.nodes:
        out.grad = None
    tape.spent = True
    _active_tape = None


# -- broadcasting helper -------------------------------------------------------


def unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise ops ------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward_fn(g):
        accumulate(a, unbroadcast(g, a.shape))
        accumulate(b, unbroadcast(g, b.shape))

    return record("add", out_data, (a, b), backward_fn)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward_fn(g):
        if a.requires_grad:
            accumulate(a, unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            accumulate(b, unbroadcast(g * a.data, b.shape))

    return record("mul", out_data, (a, b), backward_fn)


def power(a, exponent):
    a = as_tensor(a)
    p = float(exponent)
    out_data = a.data**p

    def backward_fn(g):
        accumulate(a, g * (p * a.data ** (p - 1.0)))

    return record("pow", out_data, (a,), backward_fn)


def exp(a):
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def backward_fn(g):
        accumulate(a, g * out_data)

    return record("exp", out_data, (a,), backward_fn)


def relu(a):
    a = as_tensor(a)
    out_data = np.maximum(a.data, 0.0)

    def backward_fn(g):
        accumulate(a, g * (a.data > 0))

    return record("relu", out_data, (a,), backward_fn)


def sigmoid(a):
    a = as_tensor(a)
    out_data = _sigmoid(a.data)

    def backward_fn(g):
        accumulate(a, g * out_data * (1.0 - out_data))

    return record("sigmoid", out_data, (a,), backward_fn)


def softplus(a):
    """log(1 + e^x), computed in the overflow-safe form; output is > 0."""
    a = as_tensor(a)
    out_data = np.maximum(a.data, 0.0) + np.log1p(np.exp(-np.abs(a.data)))

    def backward_fn(g):
        accumulate(a, g * _sigmoid(a.data))

    return record("softplus", out_data, (a,), backward_fn)


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


# -- shape ops -------------------------------------------------------------------


def reshape(a, shape):
    a = as_tensor(a)
    out_data = a.data.reshape(shape)

    def backward_fn(g):
        accumulate(a, g.reshape(a.shape))

    return record("reshape", out_data, (a,), backward_fn)


def transpose(a, axes):
    a = as_tensor(a)
    axes = tuple(axes)
    out_data = np.transpose(a.data, axes)
    inverse = np.argsort(axes)

    def backward_fn(g):
        accumulate(a, np.transpose(g, inverse))

    return record("transpose", out_data, (a,), backward_fn)


def getitem(a, key):
    a = as_tensor(a)
    out_data = a.data[key]

    def backward_fn(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        accumulate(a, full)

    return record("getitem", out_data, (a,), backward_fn)


def concat(tensors, axis):
    """Concatenate along ``axis``; every other dimension must agree."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of an empty list")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
            i != axis % len(ref) and d != ref[i] for i, d in enumerate(t.shape)
        ):
            raise ShapeError(f"concat shapes incompatible off axis {axis}: {ref} vs {t.shape}")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            accumulate(t, g[tuple(index)])

    return record("concat", out_data, tuple(tensors), backward_fn)


# -- reductions -------------------------------------------------------------------


def tensor_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is None:
            accumulate(a, np.broadcast_to(g, a.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        accumulate(a, np.broadcast_to(g, a.shape).copy())

    return record("sum", np.asarray(out_data), (a,), backward_fn)


def tensor_mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        count = a.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.shape[ax] for ax in axis]))
    else:
        count = a.shape[axis]
    return tensor_sum(a, axis, keepdims) * (1.0 / count)


def exclusive_cumsum(a, axis=-1):
    """out[..., i] = sum of entries strictly before i along ``axis``."""
    a = as_tensor(a)
    inclusive = np.cumsum(a.data, axis=axis)
    out_data = inclusive - a.data

    def backward_fn(g):
        # d out_i / d a_j = 1 for j < i, so grad_j = sum of g_i over i > j
        flipped = np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis)
        accumulate(a, flipped - g)

    return record("exclusive_cumsum", out_data, (a,), backward_fn)
