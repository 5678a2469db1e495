"""Define-by-run reverse-mode differentiation over float64 numpy arrays.

A :class:`Node` wraps a value and, when it depends on a trainable leaf, a
closure that pushes its upstream gradient into its parents. Graphs are built
fresh for every evaluation and discarded afterwards.

Broadcasting is deliberately limited to scalar-vs-tensor; anything else has to
be spelled out with :func:`broadcast_rows`.
"""

from __future__ import annotations

from typing import Callable, Mapping, Union

import numpy as np

from .exceptions import DomainError, EvaluationError, InputError, ShapeError, ContractError

ArrayLike = Union[np.ndarray, float, int]


def as_tensor(data) -> np.ndarray:
    """Convert ``data`` to a float64 array, rejecting NaN and Inf."""
    arr = np.array(data, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InputError("tensor contains non-finite entries")
    return arr


class Node:
    """A value in the computation graph.

    Leaves created directly by the user are validated; intermediate nodes are
    produced by the operations in this module. ``grad`` of a leaf starts at
    zero and accumulates across calls to :func:`backward`.
    """

    __slots__ = ("value", "grad", "op", "parents", "requires_grad", "_backward")

    def __init__(self, value, requires_grad: bool = False):
        self.value = as_tensor(value)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.value) if requires_grad else None
        self.op = "leaf"
        self.parents: tuple[Node, ...] = ()
        self._backward = None

    @classmethod
    def _result(cls, value: np.ndarray, op: str, parents: tuple, backward) -> "Node":
        node = cls.__new__(cls)
        node.value = value
        node.op = op
        node.grad = None
        if any(p.requires_grad for p in parents):
            node.requires_grad = True
            node.parents = parents
            node._backward = backward
        else:
            node.requires_grad = False
            node.parents = ()
            node._backward = None
        return node

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Node(op={self.op!r}, shape={self.value.shape})"

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

    def __matmul__(self, other):
        return matmul(self, other)


def constant(data) -> Node:
    return Node(data, requires_grad=False)


def _lift(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _accumulate(node: Node, grad: np.ndarray, fresh: bool = True) -> None:
    """Add ``grad`` into ``node.grad``.

    ``fresh`` marks arrays allocated by the caller, which may be adopted
    without a copy; shared upstream buffers must pass ``fresh=False``.
    """
    if not node.requires_grad:
        return
    if node.value.ndim == 0 and np.ndim(grad) != 0:
        grad, fresh = np.asarray(grad.sum()), True
    if node.grad is None:
        node.grad = grad if fresh and isinstance(grad, np.ndarray) else np.array(grad)
    else:
        node.grad += grad


def _check_binary(a: Node, b: Node, op: str) -> None:
    sa, sb = a.value.shape, b.value.shape
    if sa != sb and sa != () and sb != ():
        raise ShapeError(f"{op}: incompatible shapes {sa} and {sb}")


# ---------------------------------------------------------------- binary ops


def add(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    _check_binary(a, b, "add")

    def backward(g):
        _accumulate(a, g, fresh=False)
        _accumulate(b, g, fresh=False)

    return Node._result(a.value + b.value, "add", (a, b), backward)


def sub(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    _check_binary(a, b, "sub")

    def backward(g):
        _accumulate(a, g, fresh=False)
        _accumulate(b, -g)

    return Node._result(a.value - b.value, "sub", (a, b), backward)


def mul(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    _check_binary(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * b.value)
        if b.requires_grad:
            _accumulate(b, g * a.value)

    return Node._result(a.value * b.value, "mul", (a, b), backward)


def div(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    _check_binary(a, b, "div")
    if np.any(b.value == 0):
        raise DomainError("div: division by zero")
    out = a.value / b.value

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g / b.value)
        if b.requires_grad:
            _accumulate(b, -g * out / b.value)

    return Node._result(out, "div", (a, b), backward)


def matmul(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.value.shape} by {b.value.shape}")

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g @ b.value.T)
        if b.requires_grad:
            _accumulate(b, a.value.T @ g)

    return Node._result(a.value @ b.value, "matmul", (a, b), backward)


# ----------------------------------------------------------------- unary ops


def neg(a) -> Node:
    a = _lift(a)
    return Node._result(-a.value, "neg", (a,), lambda g: _accumulate(a, -g))


def sigmoid(a) -> Node:
    a = _lift(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return Node._result(out, "sigmoid", (a,), lambda g: _accumulate(a, g * out * (1.0 - out)))


def tanh(a) -> Node:
    a = _lift(a)
    out = np.tanh(a.value)
    return Node._result(out, "tanh", (a,), lambda g: _accumulate(a, g * (1.0 - out * out)))


def softplus(a) -> Node:
    a = _lift(a)
    out = np.logaddexp(0.0, a.value)

    def backward(g):
        _accumulate(a, g * 0.5 * (1.0 + np.tanh(0.5 * a.value)))

    return Node._result(out, "softplus", (a,), backward)


def log(a) -> Node:
    a = _lift(a)
    if np.any(a.value <= 0):
        raise DomainError("log: non-positive argument")
    return Node._result(np.log(a.value), "log", (a,), lambda g: _accumulate(a, g / a.value))


def square(a) -> Node:
    a = _lift(a)
    return Node._result(a.value * a.value, "square", (a,), lambda g: _accumulate(a, 2.0 * g * a.value))


def relu(a) -> Node:
    a = _lift(a)
    mask = a.value > 0
    return Node._result(np.where(mask, a.value, 0.0), "relu", (a,), lambda g: _accumulate(a, g * mask))


def transpose(a) -> Node:
    a = _lift(a)
    if a.value.ndim != 2:
        raise ShapeError("transpose expects a matrix")
    return Node._result(a.value.T, "transpose", (a,), lambda g: _accumulate(a, g.T, fresh=False))


# ------------------------------------------------------- shape / reductions


def sum(a) -> Node:  # noqa: A001 - mirrors numpy naming
    a = _lift(a)
    shape = a.value.shape
    return Node._result(np.array(a.value.sum()), "sum", (a,), lambda g: _accumulate(a, np.full(shape, g)))


def mean(a) -> Node:
    a = _lift(a)
    n = a.value.size
    return sum(a) * (1.0 / n)


def broadcast_rows(v, n: int) -> Node:
    """Stack a vector ``n`` times into an ``n x len(v)`` matrix."""
    v = _lift(v)
    if v.value.ndim != 1:
        raise ShapeError("broadcast_rows expects a vector")
    out = np.broadcast_to(v.value, (n, v.value.shape[0])).copy()
    return Node._result(out, "broadcast_rows", (v,), lambda g: _accumulate(v, g.sum(axis=0)))


def column(a, j: int) -> Node:
    """Select column ``j`` of a matrix as a vector."""
    a = _lift(a)
    if a.value.ndim != 2:
        raise ShapeError("column expects a matrix")
    shape = a.value.shape

    def backward(g):
        full = np.zeros(shape)
        full[:, j] = g
        _accumulate(a, full)

    return Node._result(a.value[:, j].copy(), "column", (a,), backward)


def concat_cols(parts) -> Node:
    """Concatenate matrices with equal row counts side by side."""
    parts = [_lift(p) for p in parts]
    if any(p.value.ndim != 2 for p in parts) or len({p.value.shape[0] for p in parts}) != 1:
        raise ShapeError("concat_cols expects matrices with equal row counts")
    widths = np.cumsum([0] + [p.value.shape[1] for p in parts])

    def backward(g):
        for p, lo, hi in zip(parts, widths[:-1], widths[1:]):
            _accumulate(p, g[:, lo:hi], fresh=False)

    return Node._result(np.concatenate([p.value for p in parts], axis=1), "concat_cols", tuple(parts), backward)


def concat(parts) -> Node:
    """Concatenate vectors end to end."""
    parts = [_lift(p) for p in parts]
    if any(p.value.ndim != 1 for p in parts):
        raise ShapeError("concat expects vectors")
    widths = np.cumsum([0] + [p.value.shape[0] for p in parts])

    def backward(g):
        for p, lo, hi in zip(parts, widths[:-1], widths[1:]):
            _accumulate(p, g[lo:hi], fresh=False)

    return Node._result(np.concatenate([p.value for p in parts]), "concat", tuple(parts), backward)


def slice_cols(a, start: int, stop: int) -> Node:
    a = _lift(a)
    if a.value.ndim != 2 or not 0 <= start < stop <= a.value.shape[1]:
        raise ShapeError(f"slice_cols: bad range [{start}, {stop}) for shape {a.value.shape}")
    shape = a.value.shape

    def backward(g):
        full = np.zeros(shape)
        full[:, start:stop] = g
        _accumulate(a, full)

    return Node._result(a.value[:, start:stop], "slice_cols", (a,), backward)


# ------------------------------------------------------------------ backward


def _topological_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root: Node) -> None:
    """Accumulate d(root)/d(leaf) into every trainable leaf's ``grad``."""
    if root.value.shape != ():
        raise ContractError(f"backward needs a scalar root, got shape {root.value.shape}")
    if not root.requires_grad:
        return
    order = _topological_order(root)
    for node in order:
        if node._backward is not None:
            node.grad = None
    root.grad = np.array(1.0)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ------------------------------------------------------------ gradient check


def finite_diff_check(
    f: Callable,
    theta: Union[ArrayLike, Mapping[str, ArrayLike]],
    step: float = 1e-5,
) -> float:
    """Largest relative disagreement between autodiff and central differences.

    ``f`` maps a node (or a dict of nodes, when ``theta`` is a dict) to a
    scalar node. The error for coordinate i is
    ``|analytic_i - numeric_i| / max(1, |analytic_i|)``.
    """
    if step <= 0:
        raise ContractError("step must be positive")
    single = not isinstance(theta, Mapping)
    arrays = {"theta": as_tensor(theta)} if single else {k: as_tensor(v) for k, v in theta.items()}

    def evaluate(nodes: dict) -> Node:
        out = f(nodes["theta"]) if single else f(nodes)
        if not np.isfinite(out.value):
            raise EvaluationError("objective evaluated to a non-finite value")
        return out

    leaves = {k: Node(v, requires_grad=True) for k, v in arrays.items()}
    backward(evaluate(leaves))

    worst = 0.0
    for name, arr in arrays.items():
        analytic = leaves[name].grad
        for idx in np.ndindex(arr.shape):
            values = []
            for delta in (step, -step):
                shifted = dict(arrays)
                moved = arr.copy()
                moved[idx] += delta
                shifted[name] = moved
                values.append(float(evaluate({k: constant(v) for k, v in shifted.items()}).value))
            numeric = (values[0] - values[1]) / (2.0 * step)
            err = abs(analytic[idx] - numeric) / max(1.0, abs(analytic[idx]))
            worst = max(worst, err)
    return worst
