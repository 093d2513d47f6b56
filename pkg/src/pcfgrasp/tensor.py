"""A small dense tensor with reverse-mode automatic differentiation.

Every op records its parents and a closure that maps the output gradient to
parent gradients. Calling :meth:`Tensor.backward` on a result walks the
recorded graph in reverse topological order. Tensors that do not require
gradients record nothing and behave as immutable values.

Broadcasting is deliberately limited: binary elementwise ops accept equal
shapes or a 0-d scalar operand. Anything else must go through
:func:`expand` explicitly, so every gradient reduction is visible in code.

Data is always float64.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, ValidationError

BCE_EPS = 1e-7

_Backward = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: _Backward | None = None

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

    @property
    def tape_id(self) -> int | None:
        """Node handle when this tensor takes part in a recorded graph."""
        if self._backward is not None or self.requires_grad:
            return id(self)
        return None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # -- autodiff ----------------------------------------------------------
    def backward(self, grad=None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise DimensionError(
                    f"backward() without an explicit gradient needs a scalar, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.shape:
                raise DimensionError(f"seed gradient shape {grad.shape} != tensor shape {self.shape}")

        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and not node._parents:
                node.grad = g.copy() if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar ------------------------------------------------------
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Iterable[Tensor], backward: _Backward) -> Tensor:
    parents = tuple(parents)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _check_pair(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _fit(grad: np.ndarray, t: Tensor) -> np.ndarray:
    # reduce a full-shape gradient onto a 0-d scalar operand
    if t.ndim == 0 and grad.ndim != 0:
        return np.asarray(grad.sum())
    return grad


# -- linear algebra -----------------------------------------------------------
def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def backward(g):
        return (g @ b.data.T if a.requires_grad else None, a.data.T @ g if b.requires_grad else None)

    return _result(a.data @ b.data, (a, b), backward)


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` with the bias broadcast over rows."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise DimensionError(f"linear: cannot multiply {x.shape} by {weight.shape}")
    out = x.data @ weight.data
    if bias is None:
        def backward(g):
            return (g @ weight.data.T if x.requires_grad else None,
                    x.data.T @ g if weight.requires_grad else None)

        return _result(out, (x, weight), backward)

    bias = as_tensor(bias)
    if bias.shape != (weight.shape[1],):
        raise DimensionError(f"linear: bias shape {bias.shape} does not match weight {weight.shape}")

    def backward_b(g):
        return (g @ weight.data.T if x.requires_grad else None,
                x.data.T @ g if weight.requires_grad else None,
                g.sum(axis=0))

    return _result(out + bias.data, (x, weight, bias), backward_b)


# -- elementwise --------------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_pair(a, b, "add")
    return _result(a.data + b.data, (a, b), lambda g: (_fit(g, a), _fit(g, b)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_pair(a, b, "sub")
    return _result(a.data - b.data, (a, b), lambda g: (_fit(g, a), _fit(-g, b)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_pair(a, b, "mul")
    return _result(a.data * b.data, (a, b), lambda g: (_fit(g * b.data, a), _fit(g * a.data, b)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_pair(a, b, "div")
    out = a.data / b.data

    def backward(g):
        return _fit(g / b.data, a), _fit(-g * out / b.data, b)

    return _result(out, (a, b), backward)


def minimum(a, b) -> Tensor:
    """Elementwise minimum; on ties the gradient goes to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    _check_pair(a, b, "minimum")
    pick_a = a.data <= b.data
    out = np.where(pick_a, a.data, b.data)

    def backward(g):
        return _fit(np.where(pick_a, g, 0.0), a), _fit(np.where(pick_a, 0.0, g), b)

    return _result(out, (a, b), backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0.0
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # split by sign so exp never overflows
    z = x.data
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return _result(out, (x,), lambda g: (g * out * (1.0 - out),))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return _result(out, (x,), lambda g: (g * 0.5 / out,))


def square(x) -> Tensor:
    x = as_tensor(x)
    return _result(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


def elementwise(op: str, *operands) -> Tensor:
    """Dispatch by name: ``relu``, ``sigmoid``, ``add``, ``mul`` or ``sub``."""
    table = {"relu": relu, "sigmoid": sigmoid, "add": add, "mul": mul, "sub": sub}
    try:
        fn = table[op]
    except KeyError:
        raise ValidationError(f"unknown elementwise op {op!r}") from None
    return fn(*operands)


# -- shape and indexing ----------------------------------------------------------
def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(int(s) for s in shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {x.shape} as {shape}") from None
    return _result(out, (x,), lambda g: (g.reshape(x.shape),))


def take(x, index) -> Tensor:
    """Numpy-style indexing; repeated indices accumulate their gradients."""
    x = as_tensor(x)
    out = x.data[index]
    if isinstance(out, np.ndarray) and np.shares_memory(out, x.data):
        out = out.copy()

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _result(np.asarray(out, dtype=np.float64), (x,), backward)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise DimensionError("concat: nothing to concatenate")
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {exc} (shapes {[t.shape for t in ts]})") from None
    ax = axis % out.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in ts])

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(ts))
        )

    return _result(out, ts, backward)


def expand(x, shape) -> Tensor:
    """Explicit broadcast of ``x`` to ``shape`` (numpy rules); gradients are summed back."""
    x = as_tensor(x)
    shape = tuple(shape)
    try:
        out = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise DimensionError(f"expand: cannot broadcast {x.shape} to {shape}") from None
    lead = len(shape) - x.ndim

    def backward(g):
        g = g.sum(axis=tuple(range(lead))) if lead else g
        axes = tuple(i for i, n in enumerate(x.shape) if n == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
        return (g,)

    return _result(out, (x,), backward)


# -- reductions ------------------------------------------------------------------
def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(out, (x,), backward)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / float(count))


def max_pool_groups(x) -> Tensor:
    """Max over the neighbour axis of a ``centers x neighbors x channels`` tensor.

    The gradient of each (center, channel) output flows to exactly one
    neighbour: the first index attaining the maximum.
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise DimensionError(f"max_pool_groups expects 3 axes, got shape {x.shape}")
    if x.shape[1] < 1:
        raise DimensionError("max_pool_groups: neighbour axis is empty")
    arg = np.argmax(x.data, axis=1)
    out = np.take_along_axis(x.data, arg[:, None, :], axis=1)[:, 0, :]

    def backward(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, arg[:, None, :], g[:, None, :], axis=1)
        return (full,)

    return _result(out, (x,), backward)


# -- losses ------------------------------------------------------------------------
def bce(pred, target, reduction: str = "mean", eps: float = BCE_EPS) -> Tensor:
    """Binary cross entropy on probabilities clamped to ``[eps, 1 - eps]``."""
    pred = as_tensor(pred)
    y = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if y.shape != pred.shape:
        raise DimensionError(f"bce: prediction shape {pred.shape} != target shape {y.shape}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValidationError("bce: targets must be 0 or 1")
    if reduction not in ("mean", "none"):
        raise ValidationError(f"bce: unknown reduction {reduction!r}")
    p = np.clip(pred.data, eps, 1.0 - eps)
    inside = (pred.data >= eps) & (pred.data <= 1.0 - eps)
    loss = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    dloss = (-(y / p) + (1.0 - y) / (1.0 - p)) * inside
    if reduction == "none":
        return _result(loss, (pred,), lambda g: (g * dloss,))
    n = float(loss.size)
    return _result(np.asarray(loss.mean()), (pred,), lambda g: (g * dloss / n,))


def cross3(a, b) -> Tensor:
    """Row-wise cross product of two ``n x 3`` tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 3:
        raise DimensionError(f"cross3: expected matching n x 3 inputs, got {a.shape} and {b.shape}")
    out = np.cross(a.data, b.data)

    def backward(g):
        return np.cross(b.data, g), np.cross(g, a.data)

    return _result(out, (a, b), backward)


def row_norm(x) -> Tensor:
    """Euclidean norm of each row of a 2-D tensor, shape ``(n, 1)``.

    The gradient of a zero-length row is taken as zero rather than undefined.
    """
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"row_norm expects a 2-D tensor, got shape {x.shape}")
    out = np.sqrt(np.einsum("ij,ij->i", x.data, x.data))[:, None]
    safe = np.where(out > 0.0, out, 1.0)

    def backward(g):
        return (np.where(out > 0.0, g / safe, 0.0) * x.data,)

    return _result(out, (x,), backward)


def normalize_rows(x) -> Tensor:
    x = as_tensor(x)
    return div(x, expand(row_norm(x), x.shape))
