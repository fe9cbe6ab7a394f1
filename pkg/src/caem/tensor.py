"""Dense float64 tensors with tape-based reverse-mode differentiation.

A :class:`Tensor` produced by an op on inputs that require gradients keeps a
reference to its parents and a closure mapping the output gradient to one
gradient per parent. :func:`backward` orders that graph topologically into a
:class:`Tape` and sweeps it once in reverse.

Every forward op checks its output for NaN/Inf and raises
:class:`~caem.errors.NonFiniteError` instead of letting it propagate.
"""

from __future__ import annotations

import contextlib
import contextvars

import numpy as np

from .errors import DetachedRoot, NonFiniteError, NotScalar, ShapeMismatch

_grad_enabled = contextvars.ContextVar("caem_grad_enabled", default=True)


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording anything on the tape."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled():
    return _grad_enabled.get()


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op", "name")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self.op = "leaf"
        self.name = name

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return self._backward is None

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __len__(self):
        return len(self.data)

    # -- operators -----------------------------------------------------
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

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division is only defined by a Python scalar")
        return scale(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return transpose(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def exp(self):
        return exp(self)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def relu(self):
        return relu(self)

    def backward(self, seed=None):
        return backward(self, seed)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


def _result(data, parents, backward_fn, op):
    if not np.isfinite(data).all():
        raise NonFiniteError(f"{op} produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.op = op
    track = _grad_enabled.get() and any(p.requires_grad for p in parents)
    out.requires_grad = track
    out._parents = tuple(parents) if track else ()
    out._backward = backward_fn if track else None
    return out


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# -- elementwise ---------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    return _result(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
                   "mul")


def neg(a):
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


def scale(a, s):
    """Multiply by a constant Python scalar."""
    a = as_tensor(a)
    s = float(s)
    return _result(a.data * s, (a,), lambda g: (g * s,), "scale")


def exp(a):
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * _sech2(a.data),), "tanh")


def _sech2(x):
    # 1 - tanh(x)**2 cancels badly once tanh saturates; 4e/(1+e)^2 with
    # e = exp(-2|x|) keeps full relative precision
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / ((1.0 + e) * (1.0 + e))


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    a = as_tensor(a)
    out = _sigmoid(a.data)
    # s(x) * s(-x) instead of s * (1 - s), which loses precision as s -> 1
    return _result(out, (a,), lambda g: (g * out * _sigmoid(-a.data),), "sigmoid")


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


# -- contractions and reductions ----------------------------------------

def _mm(x, w):
    """``x @ w`` whose rows do not depend on how many rows ``x`` has.

    BLAS routes a single row through gemv, which sums in a different order
    than gemm; padding to two rows keeps every row on the gemm path.
    """
    if x.shape[0] == 1:
        return (np.vstack([x, np.zeros_like(x)]) @ w)[:1]
    return x @ w


def matmul(a, b):
    """``a @ b`` for ``a`` of shape (..., k) and a matrix ``b`` of shape (k, n)."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    k, n = b.shape
    lead = a.shape[:-1]
    a2 = a.data.reshape(-1, k)
    out = _mm(a2, b.data).reshape(lead + (n,))

    def backward_fn(g):
        g2 = g.reshape(-1, n)
        ga = _mm(g2, b.data.T).reshape(a.shape) if a.requires_grad else None
        gb = a2.T @ g2 if b.requires_grad else None
        return ga, gb

    return _result(out, (a, b), backward_fn, "matmul")


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def _expand_grad(g, shape, axes, keepdims):
    if not keepdims:
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    out = np.sum(a.data, axis=axes, keepdims=keepdims)
    return _result(np.asarray(out, dtype=np.float64), (a,),
                   lambda g: (_expand_grad(g, a.shape, axes, keepdims),), "sum")


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = np.sum(a.data, axis=axes, keepdims=keepdims) / count
    return _result(np.asarray(out, dtype=np.float64), (a,),
                   lambda g: (_expand_grad(g / count, a.shape, axes, keepdims),), "mean")


def sumsq(a, axis=None, keepdims=False):
    """Squared L2 reduction ``sum(a**2)`` over ``axis``."""
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    out = np.sum(a.data * a.data, axis=axes, keepdims=keepdims)
    return _result(np.asarray(out, dtype=np.float64), (a,),
                   lambda g: (2.0 * a.data * _expand_grad(g, a.shape, axes, keepdims),), "sumsq")


def softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (a,), backward_fn, "softmax")


# -- structural ----------------------------------------------------------

def reshape(a, shape):
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"reshape: {a.shape} -> {shape}") from None
    return _result(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),), "transpose")


def getitem(a, index):
    a = as_tensor(a)
    out = a.data[index]

    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(p, (int, slice, type(None), type(Ellipsis))) for p in parts)

    def backward_fn(g):
        full = np.zeros(a.shape)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _result(np.array(out, dtype=np.float64), (a,), backward_fn, "slice")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatch(f"concat: {[t.shape for t in tensors]} on axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(out, tensors, backward_fn, "concat")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis % (t.ndim + 1)] + (1,) + t.shape[axis % (t.ndim + 1):])
                for t in tensors]
    return concat(expanded, axis=axis)


def pad(a, pad_width):
    """Zero padding; ``pad_width`` as for :func:`numpy.pad`."""
    a = as_tensor(a)
    pad_width = [tuple(p) for p in pad_width]
    if len(pad_width) != a.ndim:
        raise ShapeMismatch(f"pad: {len(pad_width)} pairs for ndim {a.ndim}")
    out = np.pad(a.data, pad_width)
    index = tuple(slice(lo, lo + n) for (lo, _), n in zip(pad_width, a.shape))
    return _result(out, (a,), lambda g: (g[index],), "pad")


# -- reverse sweep -------------------------------------------------------

class Tape:
    """Nodes reachable from a root, parents before children."""

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def record(cls, root):
        order = []
        seen = set()
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
            for parent in reversed(node._parents):
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        return cls(order)

    @property
    def leaves(self):
        return [n for n in self.nodes if n.is_leaf]

    def sweep(self, root, seed):
        slots = {id(root): seed}
        result = {}
        for node in reversed(self.nodes):
            g = slots.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                result[node] = node.grad
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                slots[key] = pg if key not in slots else slots[key] + pg
        return result


def backward(root, seed=None):
    """Accumulate d(root)/d(leaf) into every reachable leaf's ``grad``.

    Returns a mapping leaf -> gradient array.
    """
    if root.size != 1:
        raise NotScalar(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        raise DetachedRoot("root was not produced on a tape")
    seed = np.ones(root.shape) if seed is None else np.asarray(seed, dtype=np.float64).reshape(root.shape)
    return Tape.record(root).sweep(root, seed)
