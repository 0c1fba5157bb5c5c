"""Dense float64 tensors with define-by-run reverse-mode differentiation.

A :class:`Tensor` wraps a numpy array. Operations on tensors that require
gradients record their inputs and a vector-Jacobian closure; :func:`backward`
walks the recorded graph in reverse topological order. The graph is rebuilt
on every evaluation and never persisted.

>>> z = Tensor([1.0, 2.0, 3.0], requires_grad=True)
>>> grads = backward(sum_(square(z)))
>>> grads[z]
array([2., 4., 6.])
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import ContractError, DimensionError, NumericError

__all__ = [
    "Tensor",
    "as_tensor",
    "forward_primitive",
    "backward",
    "grad",
    "gradient_check",
    "matmul",
    "add",
    "subtract",
    "multiply",
    "scale",
    "sum_",
    "tanh",
    "sigmoid",
    "softplus",
    "exp",
    "log",
    "square",
    "sin",
    "cos",
    "concat_rows",
    "take_rows",
    "reshape",
    "PRIMITIVES",
]


class Tensor:
    """A node of the computation graph holding a finite float64 array.

    The array is not copied when it already is float64; callers must not
    mutate it in place while the tensor is alive.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "parents", "_vjp", "__weakref__")

    def __init__(self, data, requires_grad=False, *, op="leaf", parents=(), vjp=None):
        arr = np.asarray(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NumericError(f"{op}: produced non-finite values")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.op = op
        self.parents = tuple(parents)
        self._vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __len__(self):
        return len(self.data)

    # Operator sugar. Python scalars on either side become `scale`/`add`.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return multiply(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __truediv__(self, other):
        if np.isscalar(other):
            return scale(self, 1.0 / other)
        return NotImplemented

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value, kind, inputs, vjp):
    needs = any(t.requires_grad for t in inputs)
    if not needs:
        return Tensor(value, op=kind)
    return Tensor(value, True, op=kind, parents=inputs, vjp=vjp)


def _unbroadcast(g, shape):
    """Sum `g` down to `shape`, undoing numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(kind, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(kind, a.shape, b.shape) from None


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _node(
        a.data + b.data,
        "add",
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def subtract(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("subtract", a, b)
    return _node(
        a.data - b.data,
        "subtract",
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
    )


def multiply(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("multiply", a, b)
    return _node(
        a.data * b.data,
        "multiply",
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def scale(a, c):
    a = as_tensor(a)
    c = float(c)
    return _node(a.data * c, "scale", (a,), lambda g: (g * c,))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError("matmul", a.shape, b.shape)
    with np.errstate(over="ignore", invalid="ignore"):
        out = a.data @ b.data
    return _node(out, "matmul", (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is not None and not -a.ndim <= axis < a.ndim:
        raise DimensionError("sum", a.shape, message=f"sum: axis {axis} out of range for {a.shape}")
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(out, "sum", (a,), vjp)


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _node(y, "tanh", (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a):
    a = as_tensor(a)
    y = expit(a.data)
    return _node(y, "sigmoid", (a,), lambda g: (g * y * (1.0 - y),))


def softplus(a):
    a = as_tensor(a)
    y = np.logaddexp(0.0, a.data)
    return _node(y, "softplus", (a,), lambda g: (g * expit(a.data),))


def exp(a):
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        y = np.exp(a.data)
    return _node(y, "exp", (a,), lambda g: (g * y,))


def log(a):
    a = as_tensor(a)
    if (a.data <= 0).any():
        raise NumericError("log: argument must be strictly positive")
    return _node(np.log(a.data), "log", (a,), lambda g: (g / a.data,))


def sin(a):
    a = as_tensor(a)
    return _node(np.sin(a.data), "sin", (a,), lambda g: (g * np.cos(a.data),))


def cos(a):
    a = as_tensor(a)
    return _node(np.cos(a.data), "cos", (a,), lambda g: (-g * np.sin(a.data),))


def square(a):
    a = as_tensor(a)
    return _node(a.data * a.data, "square", (a,), lambda g: (2.0 * g * a.data,))


def concat_rows(tensors):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat-rows", message="concat-rows: no inputs")
    tails = {t.shape[1:] for t in tensors}
    if len(tails) != 1 or tensors[0].ndim == 0:
        raise DimensionError("concat-rows", *(t.shape for t in tensors))
    bounds = np.cumsum([0] + [t.shape[0] for t in tensors])

    def vjp(g):
        return tuple(g[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))

    return _node(np.concatenate([t.data for t in tensors]), "concat-rows", tuple(tensors), vjp)


def take_rows(a, index):
    """Gather rows ``a[index]``; repeated indices accumulate in the backward pass."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)
    if a.ndim == 0 or (index.size and (index.min() < -len(a) or index.max() >= len(a))):
        raise DimensionError("take-rows", a.shape, index.shape)

    def vjp(g):
        out = np.zeros_like(a.data)
        np.add.at(out, index, g)
        return (out,)

    return _node(a.data[index], "take-rows", (a,), vjp)


def reshape(a, shape):
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError("reshape", a.shape, tuple(np.atleast_1d(shape))) from None
    return _node(out, "reshape", (a,), lambda g: (g.reshape(a.shape),))


PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "subtract": subtract,
    "multiply": multiply,
    "scale": scale,
    "sum": sum_,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softplus": softplus,
    "exp": exp,
    "log": log,
    "square": square,
    "sin": sin,
    "cos": cos,
    "concat-rows": lambda *ts: concat_rows(ts),
    "take-rows": take_rows,
    "reshape": reshape,
}


def forward_primitive(kind, inputs, *args, **kwargs):
    """Apply the primitive named `kind` to `inputs` (extra args are op attributes)."""
    try:
        fn = PRIMITIVES[kind]
    except KeyError:
        raise ContractError(f"unknown op kind {kind!r}") from None
    return fn(*inputs, *args, **kwargs)


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root):
    """Propagate adjoints from a scalar `root`.

    Returns a dict mapping every leaf tensor with ``requires_grad`` to its
    gradient, and stores the same array on ``leaf.grad`` (overwriting, so
    repeated calls give identical results).
    """
    if root.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return {}
    adjoint = {id(root): np.ones_like(root.data)}
    grads = {}
    for node in reversed(_topological(root)):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if not node.parents:
            node.grad = g
            grads[node] = g
            continue
        for parent, pg in zip(node.parents, node._vjp(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in adjoint:
                adjoint[key] = adjoint[key] + pg
            else:
                adjoint[key] = np.array(pg, dtype=np.float64)
    return grads


def grad(root, wrt):
    """Gradients of scalar `root` with respect to each tensor in `wrt` (zeros if unused)."""
    grads = backward(root)
    return [grads.get(t, np.zeros_like(t.data)) for t in wrt]


def gradient_check(f, p, h=1e-5):
    """Largest relative gap between autodiff and central differences.

    `f` maps a Tensor to a scalar Tensor. The error per coordinate is
    ``|ad - fd| / max(1, |fd|)``.
    """
    if h <= 0:
        raise ContractError("gradient_check: step h must be positive")
    p = np.array(p.data if isinstance(p, Tensor) else p, dtype=np.float64)
    leaf = Tensor(p, requires_grad=True)
    (ad,) = grad(f(leaf), [leaf])
    fd = np.empty_like(p)
    flat = p.reshape(-1)
    for i in range(flat.size):
        hi, lo = flat.copy(), flat.copy()
        hi[i] += h
        lo[i] -= h
        try:
            f_hi = f(Tensor(hi.reshape(p.shape))).item()
            f_lo = f(Tensor(lo.reshape(p.shape))).item()
        except NumericError as exc:
            raise NumericError(f"gradient_check: non-finite evaluation at coordinate {i}") from exc
        fd.reshape(-1)[i] = (f_hi - f_lo) / (2.0 * h)
    if fd.size == 0:
        return 0.0
    return float(np.max(np.abs(ad - fd) / np.maximum(1.0, np.abs(fd))))
