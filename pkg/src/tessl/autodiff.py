"""Minimal reverse-mode automatic differentiation over 2-D float64 arrays.

Every value is a :class:`Tensor` holding a ``(rows, cols)`` array. Tensors built
by primitives remember their parents and a backward closure, so the tensor
doubles as the graph node. Call :func:`backward` on a 1x1 result to get
gradients for any leaf.

    >>> x = Tensor([[2.0, 5.0]], requires_grad=True)
    >>> g = backward(relu(x).sum(), wrt=[x])
    >>> g[x].tolist()
    [[1.0, 1.0]]
"""
from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np

NORM_EPS = 1e-12


class ShapeError(ValueError):
    """Raised when a primitive receives incompatible operand shapes."""


class Tensor:
    __slots__ = ("data", "requires_grad", "op", "parents", "_backward", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"Tensor must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("Tensor values must be finite")
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = requires_grad
        self.op = "leaf"
        self.parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @classmethod
    def _from_op(cls, data: np.ndarray, op: str, parents, backward_fn) -> "Tensor":
        out = cls.__new__(cls)
        data = np.asarray(data, dtype=np.float64)
        data.setflags(write=False)
        out.data = data
        out.op = op
        out.parents = tuple(parents)
        out.requires_grad = any(p.requires_grad for p in parents)
        out._backward = backward_fn if out.requires_grad else None
        out.grad = None
        out.name = None
        return out

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # operator sugar, all routed through the primitives below
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division is only supported by constants")
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis: Optional[int] = None) -> "Tensor":
        return sum_(self, axis)

    def mean(self, axis: Optional[int] = None) -> "Tensor":
        return mean(self, axis)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    for axis in (0, 1):
        if shape[axis] == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: tuple[int, int], b: tuple[int, int]) -> tuple[int, int]:
    out = []
    for da, db in zip(a, b):
        if da == db or db == 1:
            out.append(da)
        elif da == 1:
            out.append(db)
        else:
            raise ShapeError(f"{op}: cannot broadcast shapes {a} and {b}")
    return tuple(out)


# ---------------------------------------------------------------- primitives


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, shapes {a.shape} and {b.shape}")
    A, B = a.data, b.data

    def backward_fn(g):
        return (g @ B.T if a.requires_grad else None, A.T @ g if b.requires_grad else None)

    return Tensor._from_op(A @ B, "matmul", (a, b), backward_fn)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a.shape, b.shape)

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, "add", (a, b), backward_fn)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a.shape, b.shape)
    A, B = a.data, b.data

    def backward_fn(g):
        return (
            _unbroadcast(g * B, a.shape) if a.requires_grad else None,
            _unbroadcast(g * A, b.shape) if b.requires_grad else None,
        )

    return Tensor._from_op(A * B, "mul", (a, b), backward_fn)


def relu(x) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0

    def backward_fn(g):
        return (g * pos,)

    return Tensor._from_op(np.where(pos, x.data, 0.0), "relu", (x,), backward_fn)


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)

    def backward_fn(g):
        return (g * out,)

    return Tensor._from_op(out, "exp", (x,), backward_fn)


def log(x, floor: float = 0.0) -> Tensor:
    """Natural log; with ``floor > 0`` the argument is clamped from below.

    Clamped entries get zero gradient.
    """
    x = as_tensor(x)
    if floor > 0:
        live = x.data > floor
        arg = np.where(live, x.data, floor)
    else:
        if np.any(x.data <= 0):
            raise ValueError("log: non-positive argument (pass floor= to clamp)")
        live = np.ones(x.shape, dtype=bool)
        arg = x.data

    def backward_fn(g):
        return (np.where(live, g / arg, 0.0),)

    return Tensor._from_op(np.log(arg), "log", (x,), backward_fn)


def sum_(x, axis: Optional[int] = None) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    if axis is None:
        out = np.array([[x.data.sum()]])
    elif axis in (0, 1):
        out = x.data.sum(axis=axis, keepdims=True)
    else:
        raise ShapeError(f"sum: axis must be None, 0 or 1, got {axis}")

    def backward_fn(g):
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor._from_op(out, "sum", (x,), backward_fn)


def mean(x, axis: Optional[int] = None) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    count = x.data.size if axis is None else shape[axis]
    if axis is None:
        out = np.array([[x.data.mean()]])
    elif axis in (0, 1):
        out = x.data.mean(axis=axis, keepdims=True)
    else:
        raise ShapeError(f"mean: axis must be None, 0 or 1, got {axis}")

    def backward_fn(g):
        return (np.broadcast_to(g / count, shape).copy(),)

    return Tensor._from_op(out, "mean", (x,), backward_fn)


def l2_normalize_rows(x, eps: float = NORM_EPS) -> Tensor:
    x = as_tensor(x)
    X = x.data
    norm = np.sqrt((X * X).sum(axis=1, keepdims=True) + eps)
    Y = X / norm

    def backward_fn(g):
        # d(x/n) = (g - y * <g, y>) / n
        return ((g - Y * (g * Y).sum(axis=1, keepdims=True)) / norm,)

    return Tensor._from_op(Y, "l2_normalize_rows", (x,), backward_fn)


def _masked_lse(X: np.ndarray, mask: Optional[np.ndarray]):
    if mask is None:
        m = X.max(axis=1, keepdims=True)
        e = np.exp(X - m)
    else:
        Xm = np.where(mask, X, -np.inf)
        m = Xm.max(axis=1, keepdims=True)
        e = np.where(mask, np.exp(Xm - m), 0.0)
    s = e.sum(axis=1, keepdims=True)
    return m + np.log(s), e / s


def log_sum_exp_rows(x, mask: Optional[np.ndarray] = None) -> Tensor:
    """Row-wise log-sum-exp with the max-shift trick.

    ``mask`` (boolean, same shape) restricts each row's sum to the True entries;
    every row must keep at least one.
    """
    x = as_tensor(x)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ShapeError(f"log_sum_exp_rows: mask shape {mask.shape} and input shape {x.shape} differ")
        if not np.all(mask.any(axis=1)):
            raise ValueError("log_sum_exp_rows: every row needs at least one unmasked entry")
    out, soft = _masked_lse(x.data, mask)

    def backward_fn(g):
        return (g * soft,)

    return Tensor._from_op(out, "log_sum_exp_rows", (x,), backward_fn)


def softmax_rows(x) -> Tensor:
    x = as_tensor(x)
    lse, _ = _masked_lse(x.data, None)
    P = np.exp(x.data - lse)

    def backward_fn(g):
        return (P * (g - (g * P).sum(axis=1, keepdims=True)),)

    return Tensor._from_op(P, "softmax_rows", (x,), backward_fn)


def transpose(x) -> Tensor:
    x = as_tensor(x)

    def backward_fn(g):
        return (g.T,)

    return Tensor._from_op(x.data.T.copy(), "transpose", (x,), backward_fn)


def slice_(x, rows=slice(None), cols=slice(None)) -> Tensor:
    """Select rows/cols by slice or integer index array (kept 2-D)."""
    x = as_tensor(x)
    r = np.asarray(rows) if not isinstance(rows, slice) else rows
    c = np.asarray(cols) if not isinstance(cols, slice) else cols
    if isinstance(r, np.ndarray) and r.ndim == 0:
        r = r.reshape(1)
    if isinstance(c, np.ndarray) and c.ndim == 0:
        c = c.reshape(1)
    try:
        out = x.data[r, :][:, c]
    except IndexError as err:
        raise ShapeError(f"slice: index out of range for shape {x.shape}") from err
    shape = x.shape

    def backward_fn(g):
        full = np.zeros(shape)
        rr = np.arange(shape[0])[r]
        cc = np.arange(shape[1])[c]
        np.add.at(full, np.ix_(rr, cc), g)
        return (full,)

    return Tensor._from_op(out, "slice", (x,), backward_fn)


PRIMITIVES: dict[str, Callable[..., Tensor]] = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "relu": relu,
    "exp": exp,
    "log": log,
    "sum": sum_,
    "mean": mean,
    "l2_normalize_rows": l2_normalize_rows,
    "log_sum_exp_rows": log_sum_exp_rows,
    "softmax_rows": softmax_rows,
    "transpose": transpose,
    "slice": slice_,
}


def apply(op: str, *inputs, **kwargs) -> Tensor:
    """Look up a primitive by name and apply it."""
    try:
        fn = PRIMITIVES[op]
    except KeyError:
        raise ValueError(f"unknown primitive {op!r}; known: {sorted(PRIMITIVES)}") from None
    return fn(*inputs, **kwargs)


# ------------------------------------------------------------------ backward


def _topo_order(root: Tensor) -> list[Tensor]:
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
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor, wrt: Optional[Iterable[Tensor]] = None) -> dict[Tensor, np.ndarray]:
    """Reverse-mode sweep from a 1x1 ``root``.

    Returns a map from leaf tensor to gradient. With ``wrt`` given, exactly those
    tensors are returned and any that do not influence ``root`` get zeros. Leaf
    ``.grad`` attributes are overwritten, never accumulated.
    """
    if root.shape != (1, 1):
        raise ShapeError(f"backward: root must be a 1x1 scalar, got shape {root.shape}")
    grads: dict[int, np.ndarray] = {id(root): np.ones((1, 1))}
    leaves: dict[int, Tensor] = {}
    if root.requires_grad:
        for node in reversed(_topo_order(root)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                leaves[id(node)] = node
                grads[id(node)] = g
                continue
            for parent, pg in zip(node.parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg
    out: dict[Tensor, np.ndarray] = {}
    targets = list(wrt) if wrt is not None else list(leaves.values())
    for t in targets:
        g = grads.get(id(t)) if id(t) in leaves else None
        g = np.zeros(t.shape) if g is None else np.asarray(g, dtype=np.float64).reshape(t.shape)
        t.grad = g
        out[t] = g
    return out


def zero_grad(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


# ------------------------------------------------------------------- layers


def init_mlp(dims: Sequence[int], rng: np.random.Generator, prefix: str = "") -> dict[str, np.ndarray]:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases for a layer chain."""
    if len(dims) < 2:
        raise ValueError("an MLP needs at least an input and an output dimension")
    params: dict[str, np.ndarray] = {}
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        params[f"{prefix}{i}.weight"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        params[f"{prefix}{i}.bias"] = rng.uniform(-bound, bound, size=(1, fan_out))
    return params


def mlp_forward(layers: Sequence[tuple[Tensor, Tensor]], x, normalize_output: bool = False) -> Tensor:
    """Affine layers with ReLU between them (none after the last)."""
    h = as_tensor(x)
    if not layers:
        raise ValueError("mlp_forward: empty layer list")
    width = h.shape[1]
    for i, (w, b) in enumerate(layers):
        if w.shape[0] != width:
            raise ShapeError(f"mlp_forward: layer {i} expects {w.shape[0]} inputs but receives {width}")
        if b.shape != (1, w.shape[1]):
            raise ShapeError(f"mlp_forward: layer {i} bias shape {b.shape} does not match weight {w.shape}")
        h = add(matmul(h, w), b)
        if i < len(layers) - 1:
            h = relu(h)
        width = w.shape[1]
    return l2_normalize_rows(h) if normalize_output else h
