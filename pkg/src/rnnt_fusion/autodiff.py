"""Reverse-mode automatic differentiation over dense float64 tensors.

The graph is a DAG of :class:`Node` objects. Each op builder computes the
forward value eagerly with numpy and installs a closure that, given the
node's accumulated output gradient, adds the local contributions to its
inputs' gradients. ``backward`` walks the graph once in reverse topological
order, so every node's gradient is complete before it propagates.

Op kinds are fixed: input, parameter, matmul, add, hadamard, tanh, sigmoid,
log-softmax, concat, slice, scale-gradient, sum, index-select. log-softmax
is the only op whose forward uses exp/log (max-subtraction stabilized);
everything upstream of a loss stays in plain arithmetic, which keeps the
alignment-lattice recursion numerically tame.

Graph construction and evaluation are single-threaded per graph; distinct
graphs share no mutable state and may run on distinct threads.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, ShapeError

OP_KINDS = frozenset(
    {
        "input",
        "parameter",
        "matmul",
        "add",
        "hadamard",
        "tanh",
        "sigmoid",
        "log-softmax",
        "concat",
        "slice",
        "scale-gradient",
        "sum",
        "index-select",
    }
)

_node_counter = 0


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    # ascontiguousarray would promote 0-d to 1-d; keep scalars 0-d
    return arr if arr.ndim == 0 else np.ascontiguousarray(arr)


class Node:
    """One vertex of the differentiation graph.

    ``value`` is set at construction (forward is eager); ``grad`` is set by
    :func:`backward` and has the same shape as ``value``.
    """

    __slots__ = ("id", "op", "inputs", "value", "grad", "name", "_backward")

    def __init__(self, value: np.ndarray, op: str, inputs: tuple["Node", ...] = (),
                 name: str | None = None):
        global _node_counter
        _node_counter += 1
        self.id = _node_counter
        self.op = op
        self.inputs = inputs
        self.value = value
        self.grad: np.ndarray | None = None
        self.name = name
        self._backward: Callable[[], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Node(id={self.id}, op={self.op!r}, shape={self.shape}{tag})"

    # Sugar; the module-level functions are the canonical surface.
    def __add__(self, other: "Node") -> "Node":
        return add(self, other)

    def __mul__(self, other: "Node") -> "Node":
        return hadamard(self, other)

    def __matmul__(self, other: "Node") -> "Node":
        return matmul(self, other)

    def __getitem__(self, key) -> "Node":
        return slice_(self, key)


def constant(data) -> Node:
    """Leaf node that receives no useful gradient (kind ``input``)."""
    return Node(_as_array(data), "input")


# Leaves hold data; the names below match how models refer to them.
input_node = constant


def parameter(data, name: str | None = None) -> Node:
    """Trainable leaf; ``backward`` reports its gradient in the map."""
    return Node(_as_array(data), "parameter", name=name)


def _accum(node: Node, g: np.ndarray) -> None:
    node.grad = g if node.grad is None else node.grad + g


def _reduce_to_shape(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` over axes that numpy broadcasting expanded."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_elementwise(op: str, a: Node, b: Node) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(
            f"{op}: shapes {a.shape} and {b.shape} do not broadcast"
        ) from None


def add(a: Node, b: Node) -> Node:
    _check_elementwise("add", a, b)
    out = Node(a.value + b.value, "add", (a, b))

    def _bw():
        _accum(a, _reduce_to_shape(out.grad, a.shape))
        _accum(b, _reduce_to_shape(out.grad, b.shape))

    out._backward = _bw
    return out


def hadamard(a: Node, b: Node) -> Node:
    _check_elementwise("hadamard", a, b)
    out = Node(a.value * b.value, "hadamard", (a, b))

    def _bw():
        _accum(a, _reduce_to_shape(out.grad * b.value, a.shape))
        _accum(b, _reduce_to_shape(out.grad * a.value, b.shape))

    out._backward = _bw
    return out


def matmul(a: Node, b: Node, transpose_b: bool = False) -> Node:
    """``a @ b`` (or ``a @ b.T``) with ``b`` a matrix or vector.

    Supported forms: (n,)@(n,k), (...,m,n)@(n,), (...,m,n)@(n,k). Leading
    axes of ``a`` are treated as a batch. ``transpose_b`` requires a 2-D
    ``b`` and multiplies by its transpose, so weights stored as (out, in)
    can act on stacks of row vectors.
    """
    av, bv = a.value, b.value
    if transpose_b and bv.ndim != 2:
        raise ShapeError(f"matmul: transpose_b needs a matrix, got {bv.shape}")
    eff_b = bv.T if transpose_b else bv
    if av.ndim == 0 or bv.ndim == 0 or bv.ndim > 2:
        raise ShapeError(f"matmul: unsupported ranks {av.shape} @ {bv.shape}")
    if av.shape[-1] != eff_b.shape[0]:
        raise ShapeError(
            f"matmul: inner extents differ, {av.shape} @ {eff_b.shape}"
        )
    out = Node(np.matmul(av, eff_b), "matmul", (a, b))

    def _bw():
        g = out.grad
        n = av.shape[-1]
        if bv.ndim == 1:
            # out[..., m] = sum_n a[..., m, n] b[n]
            if av.ndim == 1:
                _accum(a, g * bv)
                _accum(b, g * av)
            else:
                _accum(a, g[..., None] * bv)
                _accum(b, av.reshape(-1, n).T @ g.reshape(-1))
        else:
            if av.ndim == 1:
                _accum(a, np.matmul(eff_b, g) if not transpose_b else np.matmul(g, bv))
                gb = np.outer(av, g)
                _accum(b, gb.T if transpose_b else gb)
            else:
                _accum(a, np.matmul(g, eff_b.T))
                # contract every leading axis: gb[n, k] = sum a[.., n] g[.., k]
                gb = av.reshape(-1, n).T @ g.reshape(-1, g.shape[-1])
                _accum(b, gb.T if transpose_b else gb)

    out._backward = _bw
    return out


def tanh(x: Node) -> Node:
    out = Node(np.tanh(x.value), "tanh", (x,))

    def _bw():
        _accum(x, out.grad * (1.0 - out.value * out.value))

    out._backward = _bw
    return out


def sigmoid(x: Node) -> Node:
    # tanh-based form avoids exp() overflow for large negative inputs.
    out = Node(0.5 * (np.tanh(0.5 * x.value) + 1.0), "sigmoid", (x,))

    def _bw():
        _accum(x, out.grad * out.value * (1.0 - out.value))

    out._backward = _bw
    return out


def log_softmax(x: Node) -> Node:
    """Log-softmax along the last axis, max-subtraction stabilized."""
    v = x.value
    if v.ndim == 0:
        raise ShapeError("log-softmax: input must have at least one axis")
    m = v.max(axis=-1, keepdims=True)
    shifted = v - m
    lse = np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
    out = Node(shifted - lse, "log-softmax", (x,))

    def _bw():
        g = out.grad
        _accum(x, g - np.exp(out.value) * g.sum(axis=-1, keepdims=True))

    out._backward = _bw
    return out


def concat(parts: Sequence[Node], axis: int = 0) -> Node:
    parts = tuple(parts)
    if not parts:
        raise ShapeError("concat: needs at least one input")
    try:
        value = np.concatenate([p.value for p in parts], axis=axis)
    except ValueError:
        raise ShapeError(
            "concat: incompatible shapes "
            + ", ".join(str(p.shape) for p in parts)
        ) from None
    out = Node(value, "concat", parts)

    def _bw():
        offsets = np.cumsum([p.value.shape[axis] for p in parts])[:-1]
        for p, g in zip(parts, np.split(out.grad, offsets, axis=axis)):
            _accum(p, g)

    out._backward = _bw
    return out


def slice_(x: Node, key) -> Node:
    """Numpy basic indexing (ints, slices, None); view-style selection."""
    try:
        value = np.asarray(x.value[key], dtype=np.float64)
    except IndexError:
        raise ShapeError(f"slice: key {key!r} invalid for shape {x.shape}") from None
    out = Node(value, "slice", (x,))

    def _bw():
        g = np.zeros_like(x.value)
        g[key] += out.grad
        _accum(x, g)

    out._backward = _bw
    return out


def index_select(x: Node, indices, axis: int = 0) -> Node:
    """Gather along ``axis`` by an integer index array (rows may repeat)."""
    idx = np.asarray(indices, dtype=np.intp)
    if x.value.ndim == 0:
        raise ShapeError("index-select: input must have at least one axis")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[axis]):
        raise ShapeError(
            f"index-select: indices out of range for extent {x.shape[axis]}"
        )
    out = Node(np.take(x.value, idx, axis=axis), "index-select", (x,))

    def _bw():
        g = np.zeros_like(x.value)
        key = (slice(None),) * axis + (idx,)
        np.add.at(g, key, out.grad)
        _accum(x, g)

    out._backward = _bw
    return out


def reduce_sum(x: Node) -> Node:
    """Full reduction to a scalar."""
    out = Node(np.asarray(x.value.sum()), "sum", (x,))

    def _bw():
        _accum(x, np.full_like(x.value, out.grad))

    out._backward = _bw
    return out


def scale_gradient(x: Node, alpha: float) -> Node:
    """Identity in the forward pass; multiplies the gradient by ``alpha``.

    The forward value is the input array itself (bit-identical, no
    arithmetic), so the output equals the input exactly for every alpha.
    """
    alpha = float(alpha)
    if not np.isfinite(alpha) or not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"scale-gradient: alpha must be in [0, 1], got {alpha}")
    out = Node(x.value, "scale-gradient", (x,))

    def _bw():
        _accum(x, alpha * out.grad)

    out._backward = _bw
    return out


def forward(kind: str, inputs: Sequence[Node], **attrs) -> Node:
    """Generic dispatcher from an op-kind string to the builder above."""
    if kind not in OP_KINDS:
        raise ShapeError(f"unknown op kind {kind!r}")
    if kind == "input":
        return constant(attrs["data"])
    if kind == "parameter":
        return parameter(attrs["data"], name=attrs.get("name"))
    if kind == "matmul":
        return matmul(*inputs, transpose_b=attrs.get("transpose_b", False))
    if kind == "add":
        return add(*inputs)
    if kind == "hadamard":
        return hadamard(*inputs)
    if kind == "tanh":
        return tanh(*inputs)
    if kind == "sigmoid":
        return sigmoid(*inputs)
    if kind == "log-softmax":
        return log_softmax(*inputs)
    if kind == "concat":
        return concat(inputs, axis=attrs.get("axis", 0))
    if kind == "slice":
        return slice_(inputs[0], attrs["key"])
    if kind == "scale-gradient":
        return scale_gradient(inputs[0], attrs["alpha"])
    if kind == "sum":
        return reduce_sum(inputs[0])
    return index_select(inputs[0], attrs["indices"], axis=attrs.get("axis", 0))


def _topo_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.id in seen:
            continue
        seen.add(node.id)
        stack.append((node, True))
        # Reversed so children are visited in input order; the exact order
        # only needs to be fixed, which it is.
        for child in reversed(node.inputs):
            stack.append((child, False))
    return order


def backward(loss: Node) -> dict[Node, np.ndarray]:
    """Reverse accumulation from a scalar loss.

    Returns a map from every reachable parameter node to its gradient.
    Every node in the subgraph gets ``grad`` set; gradients from any prior
    backward call on overlapping nodes are cleared first, so repeated calls
    after identical forwards yield identical maps.
    """
    if loss.value.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    order = _topo_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward()
    return {
        node: node.grad
        for node in order
        if node.op == "parameter" and node.grad is not None
    }


def finite_difference_check(
    loss_fn: Callable[[], Node],
    params: Iterable[Node],
    step: float = 1e-5,
) -> float:
    """Worst relative error between analytic and central-difference grads.

    ``loss_fn`` must rebuild the loss graph from the given parameter nodes
    on every call and be deterministic. Each scalar entry is perturbed by
    ±step in place; the relative error uses the denominator
    max(|analytic|, |numeric|, 1e-8).
    """
    if step <= 0:
        raise ConfigError(f"finite_difference_check: step must be > 0, got {step}")
    params = list(params)
    grads = backward(loss_fn())
    analytic = [np.array(grads.get(p, np.zeros_like(p.value))) for p in params]
    worst = 0.0
    for p, g in zip(params, analytic):
        flat = p.value.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = float(loss_fn().value)
            flat[i] = orig - step
            down = float(loss_fn().value)
            flat[i] = orig
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(gflat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst
