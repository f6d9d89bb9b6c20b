"""Joint-network fusion structures and the output layer.

Six ways of fusing the acoustic row h_enc(t) with the text row h_pred(u)
into h_joint(t, u):

* ``fc-add``        tanh(W1 e + W2 p)
* ``fc-mul``        tanh(W1 e (*) W2 p)
* ``gating``        g (*) tanh(W1 e) + (1 - g) (*) tanh(W2 p),
                    g = sigmoid(Wg1 e + Wg2 p)
* ``bilinear-full`` element d = e^T B_d p over a (D_joint, D_enc, D_pred)
                    weight tensor; oracle-scale only, guarded by a cap
* ``bilinear-lowrank``  tanh(W_proj(tanh(W_low1^T e) (*) tanh(W_low2^T p))
                        + W1 e + W2 p)
* ``combination``   low-rank pooling stacked on gating: the second pooling
                    input is the gating output, shortcuts still take the
                    raw e and p (with their own weight matrices)

All weights are bias-free by default; a config flag adds a bias vector to
each pre-activation for experimentation. Every fusion function accepts
vectors or stacks of rows with broadcast-compatible leading axes, so one
call can fill a whole (T, U+1) grid.

A single gating vector g and its complement 1-g are used; a two-gate
variant is out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeError
from .rng import Stream, glorot

FUSION_KINDS = (
    "fc-add",
    "fc-mul",
    "gating",
    "bilinear-full",
    "bilinear-lowrank",
    "combination",
)

_NEEDS_RANK = ("bilinear-lowrank", "combination")

# Full bilinear tensors above this many elements are refused; the low-rank
# form exists precisely to avoid them.
BILINEAR_ELEMENT_CAP = 1_000_000


@dataclass(frozen=True)
class FusionSpec:
    kind: str
    d_enc: int
    d_pred: int
    d_joint: int
    d_rank: int | None = None
    bias: bool = False

    def __post_init__(self):
        if self.kind not in FUSION_KINDS:
            raise ConfigError(
                f"unknown fusion kind {self.kind!r}; expected one of {FUSION_KINDS}"
            )
        for field in ("d_enc", "d_pred", "d_joint"):
            if getattr(self, field) <= 0:
                raise ConfigError(f"{field} must be positive")
        if self.kind in _NEEDS_RANK:
            if self.d_rank is None or self.d_rank <= 0:
                raise ConfigError(f"{self.kind} requires a positive d_rank")
        elif self.d_rank is not None:
            raise ConfigError(f"{self.kind} does not take d_rank")


def param_shapes(spec: FusionSpec) -> dict[str, tuple[int, ...]]:
    """Weight (and optional bias) shapes for one fusion structure."""
    e, p, j, r = spec.d_enc, spec.d_pred, spec.d_joint, spec.d_rank
    shapes: dict[str, tuple[int, ...]] = {}
    if spec.kind in ("fc-add", "fc-mul"):
        shapes["w_joint_1"] = (j, e)
        shapes["w_joint_2"] = (j, p)
        if spec.bias:
            if spec.kind == "fc-add":
                shapes["b_joint"] = (j,)
            else:
                shapes["b_joint_1"] = (j,)
                shapes["b_joint_2"] = (j,)
    elif spec.kind == "gating":
        shapes["w_gate_1"] = (j, e)
        shapes["w_gate_2"] = (j, p)
        shapes["w_joint_1"] = (j, e)
        shapes["w_joint_2"] = (j, p)
        if spec.bias:
            shapes["b_gate"] = (j,)
            shapes["b_joint_1"] = (j,)
            shapes["b_joint_2"] = (j,)
    elif spec.kind == "bilinear-full":
        shapes["w_bi"] = (j, e, p)
        if spec.bias:
            shapes["b_joint"] = (j,)
    elif spec.kind == "bilinear-lowrank":
        shapes["w_low_1"] = (e, r)
        shapes["w_low_2"] = (p, r)
        shapes["w_proj"] = (j, r)
        shapes["w_joint_1"] = (j, e)
        shapes["w_joint_2"] = (j, p)
        if spec.bias:
            shapes["b_low_1"] = (r,)
            shapes["b_low_2"] = (r,)
            shapes["b_joint"] = (j,)
    else:  # combination
        shapes["w_gate_1"] = (j, e)
        shapes["w_gate_2"] = (j, p)
        shapes["w_gate_joint_1"] = (j, e)
        shapes["w_gate_joint_2"] = (j, p)
        shapes["w_low_1"] = (e, r)
        shapes["w_low_2"] = (j, r)  # pools the gating output, width D_joint
        shapes["w_proj"] = (j, r)
        shapes["w_joint_1"] = (j, e)
        shapes["w_joint_2"] = (j, p)
        if spec.bias:
            shapes["b_gate"] = (j,)
            shapes["b_gate_joint_1"] = (j,)
            shapes["b_gate_joint_2"] = (j,)
            shapes["b_low_1"] = (r,)
            shapes["b_low_2"] = (r,)
            shapes["b_joint"] = (j,)
    return shapes


def param_count(spec: FusionSpec) -> int:
    """Exact number of scalar parameters in the joint network.

    Joint-network weights only; the output layer is counted separately
    (a wider fused representation also grows the output layer, which is
    how an fc-add joint at D_joint=790 with a 16384-way output reaches
    roughly 3.37M combined, versus 910,080 here).
    """
    return int(sum(int(np.prod(s)) for s in param_shapes(spec).values()))


def init_fusion(spec: FusionSpec, stream: Stream) -> dict[str, np.ndarray]:
    """Seeded glorot-uniform weights; biases start at zero."""
    if spec.kind == "bilinear-full":
        n = spec.d_enc * spec.d_pred * spec.d_joint
        if n > BILINEAR_ELEMENT_CAP:
            raise ConfigError(
                f"bilinear-full tensor has {n} elements, cap is "
                f"{BILINEAR_ELEMENT_CAP}; use bilinear-lowrank"
            )
    params = {}
    for name, shape in param_shapes(spec).items():
        if name.startswith("b_"):
            params[name] = np.zeros(shape)
        elif len(shape) == 2:
            params[name] = glorot(stream, shape[0], shape[1])
        else:
            # rank-3 bilinear tensor: fan counts the two input widths
            limit = np.sqrt(6.0 / (shape[1] + shape[2]))
            params[name] = stream.uniform_array(shape) * (2.0 * limit) - limit
    return params


class FusionNodes:
    """Long-lived parameter leaves for one joint network."""

    def __init__(self, spec: FusionSpec, params: dict[str, np.ndarray]):
        self.spec = spec
        expected = param_shapes(spec)
        if set(params) != set(expected):
            raise ShapeError(
                f"fusion params mismatch: got {sorted(params)}, "
                f"expected {sorted(expected)}"
            )
        for name, shape in expected.items():
            if tuple(params[name].shape) != shape:
                raise ShapeError(
                    f"fusion param {name}: shape {params[name].shape} != {shape}"
                )
        self.nodes = {
            name: ad.parameter(arr, name=f"joint.{name}")
            for name, arr in params.items()
        }

    def named(self) -> dict[str, ad.Node]:
        return {node.name: node for node in self.nodes.values()}

    def __getitem__(self, name: str) -> ad.Node:
        return self.nodes[name]


def _rows_times(h: ad.Node, w: ad.Node) -> ad.Node:
    """(…, in) rows through a (out, in) weight -> (…, out)."""
    return ad.matmul(h, w, transpose_b=True)


def _maybe_bias(x: ad.Node, nodes: FusionNodes, name: str) -> ad.Node:
    if nodes.spec.bias and name in nodes.nodes:
        return ad.add(x, nodes[name])
    return x


def _one_minus(x: ad.Node) -> ad.Node:
    return ad.add(ad.constant(1.0), ad.hadamard(ad.constant(-1.0), x))


def fuse_fc_add(h_enc: ad.Node, h_pred: ad.Node, nodes: FusionNodes) -> ad.Node:
    pre = ad.add(_rows_times(h_enc, nodes["w_joint_1"]),
                 _rows_times(h_pred, nodes["w_joint_2"]))
    return ad.tanh(_maybe_bias(pre, nodes, "b_joint"))


def fuse_fc_mul(h_enc: ad.Node, h_pred: ad.Node, nodes: FusionNodes) -> ad.Node:
    a = _maybe_bias(_rows_times(h_enc, nodes["w_joint_1"]), nodes, "b_joint_1")
    b = _maybe_bias(_rows_times(h_pred, nodes["w_joint_2"]), nodes, "b_joint_2")
    return ad.tanh(ad.hadamard(a, b))


def _gate(h_enc: ad.Node, h_pred: ad.Node, nodes: FusionNodes,
          w1: str, w2: str, bg: str, b1: str, b2: str) -> ad.Node:
    g = ad.sigmoid(_maybe_bias(
        ad.add(_rows_times(h_enc, nodes["w_gate_1"]),
               _rows_times(h_pred, nodes["w_gate_2"])),
        nodes, bg))
    enc_branch = ad.tanh(_maybe_bias(_rows_times(h_enc, nodes[w1]), nodes, b1))
    pred_branch = ad.tanh(_maybe_bias(_rows_times(h_pred, nodes[w2]), nodes, b2))
    return ad.add(ad.hadamard(g, enc_branch),
                  ad.hadamard(_one_minus(g), pred_branch))


def fuse_gating(h_enc: ad.Node, h_pred: ad.Node, nodes: FusionNodes) -> ad.Node:
    return _gate(h_enc, h_pred, nodes,
                 "w_joint_1", "w_joint_2", "b_gate", "b_joint_1", "b_joint_2")


def fuse_bilinear_full(h_enc: ad.Node, h_pred: ad.Node,
                       nodes: FusionNodes) -> ad.Node:
    """element d = h_enc^T W_bi[d] h_pred; vector inputs only."""
    spec = nodes.spec
    n = spec.d_enc * spec.d_pred * spec.d_joint
    if n > BILINEAR_ELEMENT_CAP:
        raise ConfigError(
            f"bilinear-full tensor has {n} elements, cap is {BILINEAR_ELEMENT_CAP}"
        )
    half = ad.matmul(nodes["w_bi"], h_pred)  # (J, E)
    out = ad.matmul(half, h_enc)  # (J,)
    return _maybe_bias(out, nodes, "b_joint")


def _lowrank_pool(x_enc: ad.Node, x_text: ad.Node, nodes: FusionNodes) -> ad.Node:
    left = ad.tanh(_maybe_bias(ad.matmul(x_enc, nodes["w_low_1"]), nodes, "b_low_1"))
    right = ad.tanh(_maybe_bias(ad.matmul(x_text, nodes["w_low_2"]), nodes, "b_low_2"))
    return _rows_times(ad.hadamard(left, right), nodes["w_proj"])


def _shortcut_tanh(pooled: ad.Node, h_enc: ad.Node, h_pred: ad.Node,
                   nodes: FusionNodes) -> ad.Node:
    pre = ad.add(pooled, ad.add(_rows_times(h_enc, nodes["w_joint_1"]),
                                _rows_times(h_pred, nodes["w_joint_2"])))
    return ad.tanh(_maybe_bias(pre, nodes, "b_joint"))


def fuse_bilinear_lowrank(h_enc: ad.Node, h_pred: ad.Node,
                          nodes: FusionNodes) -> ad.Node:
    return _shortcut_tanh(_lowrank_pool(h_enc, h_pred, nodes),
                          h_enc, h_pred, nodes)


def fuse_combination(h_enc: ad.Node, h_pred: ad.Node,
                     nodes: FusionNodes) -> ad.Node:
    """Low-rank pooling over (h_enc, gating output), raw shortcuts."""
    h_gate = _gate(h_enc, h_pred, nodes, "w_gate_joint_1", "w_gate_joint_2",
                   "b_gate", "b_gate_joint_1", "b_gate_joint_2")
    return _shortcut_tanh(_lowrank_pool(h_enc, h_gate, nodes),
                          h_enc, h_pred, nodes)


_FUSE_FNS = {
    "fc-add": fuse_fc_add,
    "fc-mul": fuse_fc_mul,
    "gating": fuse_gating,
    "bilinear-full": fuse_bilinear_full,
    "bilinear-lowrank": fuse_bilinear_lowrank,
    "combination": fuse_combination,
}


def fuse(h_enc: ad.Node, h_pred: ad.Node, nodes: FusionNodes) -> ad.Node:
    return _FUSE_FNS[nodes.spec.kind](h_enc, h_pred, nodes)


def fuse_grid(h_enc: ad.Node, h_pred: ad.Node, nodes: FusionNodes) -> ad.Node:
    """All (t, u) cells at once: (T, D_enc) x (U+1, D_pred) -> (T, U+1, D_joint).

    Cell (t, u) equals fuse() on the corresponding row pair; broadcasting
    just evaluates the cells in one deterministic sweep.
    """
    if nodes.spec.kind == "bilinear-full":
        # One (J, E) contraction per text row, then all t in one matmul.
        u_rows = h_pred.shape[0]
        cols = []
        for u in range(u_rows):
            half = ad.matmul(nodes["w_bi"], h_pred[u])  # (J, E)
            col = ad.matmul(h_enc, half, transpose_b=True)  # (T, J)
            cols.append(col[:, None, :])
        out = ad.concat(cols, axis=1)
        return _maybe_bias(out, nodes, "b_joint")
    return fuse(h_enc[:, None, :], h_pred[None, :, :], nodes)


@dataclass
class OutputLayerParams:
    """Final linear map to K = |V| + 1 classes (vocabulary plus blank)."""

    w_out: np.ndarray  # (K, D_joint)

    def __post_init__(self):
        if self.w_out.shape[0] < 2:
            raise ConfigError("output layer needs at least 2 classes")


def output_logprobs(h_joint: ad.Node, w_out: ad.Node) -> ad.Node:
    """Log-softmax of W_out h_joint along the class axis."""
    return ad.log_softmax(ad.matmul(h_joint, w_out, transpose_b=True))


# ---------------------------------------------------------------------------
# Plain-numpy reference formulations, used as independent oracles in tests.
# ---------------------------------------------------------------------------

def bilinear_vectorized_reference(w_bi: np.ndarray, h_enc: np.ndarray,
                                  h_pred: np.ndarray) -> np.ndarray:
    """Outer-product form: stack Vector(B_d) rows against Vector(e (x) p)."""
    j = w_bi.shape[0]
    flat_w = w_bi.reshape(j, -1)  # row d = Vector(B_d)
    outer = np.outer(h_enc, h_pred).reshape(-1)
    return flat_w @ outer


def untied_lowrank_reference(w1_stack: np.ndarray, w2_stack: np.ndarray,
                             h_enc: np.ndarray, h_pred: np.ndarray) -> np.ndarray:
    """Per-element low-rank form h_d = 1^T((W1_d^T e) (*) (W2_d^T p)).

    No tanh and no tying; equals the full bilinear form with
    B_d = W1_d W2_d^T exactly.
    """
    out = np.empty(w1_stack.shape[0])
    for d in range(w1_stack.shape[0]):
        out[d] = np.sum((w1_stack[d].T @ h_enc) * (w2_stack[d].T @ h_pred))
    return out
