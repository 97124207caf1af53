"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable operation returns a new :class:`Tensor` that remembers its
parents and a closure mapping the output gradient to parent gradients.
:meth:`Tensor.backward` walks the recorded graph in reverse topological order.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import DimensionError, DomainError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference passes)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """An n-dimensional float64 array that can take part in backpropagation.

    Attributes:
        data: the values, always a float64 ndarray.
        requires_grad: whether gradients flow to / through this tensor.
        grad: accumulated gradient for leaves after :meth:`backward`.
        name: optional label, used for parameters.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward_fn", "_op")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        if not (isinstance(data, np.ndarray) and data.dtype == np.float64):
            data = np.array(data, dtype=np.float64)
        self.data = data
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Callable | None = None
        self._op = "leaf"

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self._op}{rg})"

    def __len__(self) -> int:
        return len(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def finite(self) -> bool:
        """True when no element is NaN or Inf."""
        return bool(np.isfinite(self.data).all())

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    @property
    def is_leaf(self) -> bool:
        return self._backward_fn is None

    # -- graph traversal --------------------------------------------------
    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf that requires it.

        Without an explicit ``grad`` the tensor must be a scalar.
        """
        if grad is None:
            if self.data.size != 1:
                raise DimensionError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            return
        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward_fn is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward_fn(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar ---------------------------------------------------
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
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return pow(self, exponent)

    def __abs__(self):
        return abs_(self)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _topological_order(root: Tensor) -> list[Tensor]:
    """Iterative DFS post-order over nodes that require grad.

    Raises RuntimeError if the recorded graph contains a cycle (which can only
    happen if ``_parents`` was tampered with).
    """
    order: list[Tensor] = []
    state: dict[int, int] = {}  # 1 = on stack, 2 = done
    stack: list[tuple[Tensor, int]] = [(root, 0)]
    while stack:
        node, idx = stack.pop()
        key = id(node)
        if idx == 0:
            st = state.get(key)
            if st == 2:
                continue
            if st == 1:
                raise RuntimeError("cycle detected in autodiff graph")
            state[key] = 1
        parents = node._parents
        if idx < len(parents):
            stack.append((node, idx + 1))
            p = parents[idx]
            if p.requires_grad:
                pst = state.get(id(p))
                if pst == 1:
                    raise RuntimeError("cycle detected in autodiff graph")
                if pst is None:
                    stack.append((p, 0))
        else:
            state[key] = 2
            order.append(node)
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_op(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    """Wrap an op result, recording the graph edge only when needed.

    ``backward`` receives the output gradient and returns one gradient (or
    None) per parent, in order.
    """
    out = Tensor(data)
    out._op = op
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward
    return out


# -- broadcasting -----------------------------------------------------------
def _check_broadcast(a: tuple, b: tuple) -> None:
    if a == b:
        return
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    if len(short) == 0 or long_[len(long_) - len(short):] == short:
        return
    raise DimensionError(f"shapes {a} and {b} are not trailing-dimension broadcastable")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead > 0:
        g = g.sum(axis=tuple(range(lead)))
    return g.reshape(shape)


# -- elementwise binary -----------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return make_op(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return make_op(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_op(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    if np.any(b.data == 0):
        raise DomainError("division by zero")
    out_data = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out_data / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_op(out_data, (a, b), backward, "div")


def pow(base, exponent) -> Tensor:  # noqa: A001 - mirrors the math name
    """``base ** exponent``.

    A plain number exponent uses the power rule.  A tensor exponent is
    evaluated as ``exp(e * log(b))`` and needs ``base > 0``.
    """
    base = as_tensor(base)
    if not isinstance(exponent, Tensor):
        p = float(exponent)
        out_data = base.data ** p
        return make_op(out_data, (base,),
                       lambda g: (g * p * base.data ** (p - 1.0),), "pow_scalar")
    _check_broadcast(base.shape, exponent.shape)
    if np.any(base.data <= 0):
        raise DomainError("pow with tensor exponent requires a positive base")
    log_b = np.log(base.data)
    out_data = np.exp(exponent.data * log_b)

    def backward(g):
        gb = _unbroadcast(g * exponent.data * out_data / base.data, base.shape) \
            if base.requires_grad else None
        ge = _unbroadcast(g * out_data * log_b, exponent.shape) if exponent.requires_grad else None
        return gb, ge

    return make_op(out_data, (base, exponent), backward, "pow")


# -- elementwise unary ------------------------------------------------------
def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_op(-a.data, (a,), lambda g: (-g,), "neg")


def abs_(a) -> Tensor:
    a = as_tensor(a)
    return make_op(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log of a non-positive value")
    return make_op(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)
    return make_op(out_data, (a,), lambda g: (g * out_data,), "exp")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt of a negative value")
    out_data = np.sqrt(a.data)
    return make_op(out_data, (a,), lambda g: (g * 0.5 / out_data,), "sqrt")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return make_op(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    scale = np.where(a.data > 0, 1.0, slope)
    return make_op(a.data * scale, (a,), lambda g: (g * scale,), "leaky_relu")


def softplus(a) -> Tensor:
    """ln(1 + e^a), computed without overflow; strictly positive with gradient sigmoid(a)."""
    a = as_tensor(a)
    with np.errstate(invalid="ignore"):
        out_data = np.logaddexp(0.0, a.data)
    slope = np.exp(a.data - out_data)
    return make_op(out_data, (a,), lambda g: (g * slope,), "softplus")


def clamp(a, lo: float | None = None, hi: float | None = None) -> Tensor:
    """Clip to ``[lo, hi]``; gradient passes where the input is inside the closed range."""
    a = as_tensor(a)
    out_data = np.clip(a.data, lo, hi)
    inside = np.ones(a.shape, dtype=bool)
    if lo is not None:
        inside &= a.data >= lo
    if hi is not None:
        inside &= a.data <= hi
    return make_op(out_data, (a,), lambda g: (g * inside,), "clamp")


# -- reductions and shape ops -------------------------------------------------
def _norm_axes(axis, ndim) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    out_data = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape),)

    return make_op(out_data, (a,), backward, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    count = 1
    for ax in axes:
        count *= a.shape[ax]
    out_data = a.data.mean(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, a.shape),)

    return make_op(out_data, (a,), backward, "mean")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    orig = a.shape
    return make_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(orig),), "reshape")


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat of an empty sequence")
    ndim = tensors[0].ndim
    ax = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != ax):
            raise DimensionError(f"cannot concat shapes {[t.shape for t in tensors]} on axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        out = []
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if not t.requires_grad:
                out.append(None)
                continue
            idx = [slice(None)] * ndim
            idx[ax] = slice(lo, hi)
            out.append(g[tuple(idx)])
        return tuple(out)

    return make_op(np.concatenate([t.data for t in tensors], axis=ax), tensors, backward, "concat")
