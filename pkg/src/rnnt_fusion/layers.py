"""Acoustic encoder and prediction network.

The encoder stacks consecutive input frames (time reduction), runs a
unidirectional LSTM stack, and projects to the acoustic width. The
prediction network embeds the start symbol plus the label history and runs
its own LSTM stack with an output projection, one state row per consumed
prefix. Both are strictly causal.

Parameter values live inside long-lived graph leaf nodes (see
:class:`EncoderNodes` / :class:`PredictorNodes`); every forward pass builds
a fresh graph on top of the same leaves, so an optimizer can update the
leaf arrays between passes and gradient maps stay keyed to stable objects.
Leaves are immutable during a pass; evaluating distinct sequences against
the same frozen leaves from distinct threads is safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ShapeError, ValidationError
from .rng import Stream, glorot


@dataclass
class LstmLayerParams:
    """Packed gate weights for one LSTM layer, gate order (i, f, g, o)."""

    w_x: np.ndarray  # (4H, input)
    w_h: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)


@dataclass
class LstmParams:
    layers: list[LstmLayerParams]
    hidden: int
    proj: np.ndarray | None = None  # (out, H); None = expose raw hidden

    @property
    def out_dim(self) -> int:
        return self.hidden if self.proj is None else self.proj.shape[0]


@dataclass
class EncoderParams:
    stack_factor: int
    lstm: LstmParams
    out: np.ndarray  # (D_enc, lstm.out_dim)

    @property
    def d_enc(self) -> int:
        return self.out.shape[0]


@dataclass
class EmbeddingTable:
    """(|V|+2) x embed rows: one per subword, plus blank, plus start."""

    table: np.ndarray

    @property
    def vocab_size(self) -> int:
        return self.table.shape[0] - 2

    @property
    def start_row(self) -> int:
        return self.table.shape[0] - 1


def init_lstm(stream: Stream, input_dim: int, hidden: int, n_layers: int,
              proj_dim: int | None = None) -> LstmParams:
    """Seeded LSTM stack; biases zero except the forget gate's, set to 1."""
    layers = []
    d_in = input_dim
    for _ in range(n_layers):
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0
        layers.append(
            LstmLayerParams(
                w_x=glorot(stream, 4 * hidden, d_in),
                w_h=glorot(stream, 4 * hidden, hidden),
                b=b,
            )
        )
        d_in = hidden
    proj = None if proj_dim is None else glorot(stream, proj_dim, hidden)
    return LstmParams(layers=layers, hidden=hidden, proj=proj)


class LstmNodes:
    """Leaf nodes for one LSTM stack, named ``<prefix>.lN.{w_x,w_h,b}``."""

    def __init__(self, params: LstmParams, prefix: str):
        self.hidden = params.hidden
        self.layers = [
            {
                "w_x": ad.parameter(lay.w_x, name=f"{prefix}.l{n}.w_x"),
                "w_h": ad.parameter(lay.w_h, name=f"{prefix}.l{n}.w_h"),
                "b": ad.parameter(lay.b, name=f"{prefix}.l{n}.b"),
            }
            for n, lay in enumerate(params.layers)
        ]
        self.proj = (
            None if params.proj is None
            else ad.parameter(params.proj, name=f"{prefix}.proj")
        )

    def named(self) -> dict[str, ad.Node]:
        out = {}
        for layer in self.layers:
            for node in layer.values():
                out[node.name] = node
        if self.proj is not None:
            out[self.proj.name] = self.proj
        return out


def lstm_step(
    nodes: dict[str, ad.Node],
    state: tuple[ad.Node, ad.Node],
    x: ad.Node,
) -> tuple[tuple[ad.Node, ad.Node], ad.Node]:
    """One LSTM cell update; returns ((h, c), h)."""
    h_prev, c_prev = state
    hid = nodes["w_h"].shape[1]
    if x.shape != (nodes["w_x"].shape[1],):
        raise ShapeError(
            f"lstm_step: input shape {x.shape} != ({nodes['w_x'].shape[1]},)"
        )
    pre = ad.add(
        ad.add(ad.matmul(nodes["w_x"], x), ad.matmul(nodes["w_h"], h_prev)),
        nodes["b"],
    )
    i = ad.sigmoid(pre[0:hid])
    f = ad.sigmoid(pre[hid : 2 * hid])
    g = ad.tanh(pre[2 * hid : 3 * hid])
    o = ad.sigmoid(pre[3 * hid : 4 * hid])
    c = ad.add(ad.hadamard(f, c_prev), ad.hadamard(i, g))
    h = ad.hadamard(o, ad.tanh(c))
    return (h, c), h


def run_lstm_stack(nodes: LstmNodes, inputs: list[ad.Node]) -> list[ad.Node]:
    """Feed a sequence through the stack; returns one output per step."""
    states = [
        (ad.constant(np.zeros(nodes.hidden)), ad.constant(np.zeros(nodes.hidden)))
        for _ in nodes.layers
    ]
    outputs = []
    for x in inputs:
        h = x
        for n, layer in enumerate(nodes.layers):
            states[n], h = lstm_step(layer, states[n], h)
        if nodes.proj is not None:
            h = ad.matmul(nodes.proj, h)
        outputs.append(h)
    return outputs


class EncoderNodes:
    def __init__(self, params: EncoderParams):
        self.stack_factor = params.stack_factor
        self.lstm = LstmNodes(params.lstm, "enc")
        self.out = ad.parameter(params.out, name="enc.out")

    def named(self) -> dict[str, ad.Node]:
        out = self.lstm.named()
        out[self.out.name] = self.out
        return out


class PredictorNodes:
    def __init__(self, params: LstmParams, table: EmbeddingTable):
        self.table = table
        self.embed = ad.parameter(table.table, name="pred.embed")
        self.lstm = LstmNodes(params, "pred")

    def named(self) -> dict[str, ad.Node]:
        out = {self.embed.name: self.embed}
        out.update(self.lstm.named())
        return out


def stack_frames(features: ad.Node, factor: int) -> list[ad.Node]:
    """Group ``factor`` consecutive frames into one wide frame; floor drop."""
    t_out = features.shape[0] // factor
    frames = []
    for t in range(t_out):
        if factor == 1:
            frames.append(features[t])
        else:
            frames.append(
                ad.concat([features[t * factor + j] for j in range(factor)])
            )
    return frames


def encode(features: ad.Node, nodes: EncoderNodes) -> ad.Node:
    """Acoustic representation grid (T, D_enc), T = floor(T_in / factor).

    Row t depends only on input frames up to (t+1)*factor - 1 (0-indexed);
    the LSTM is unidirectional, so no lookahead exists anywhere.
    """
    if features.value.ndim != 2 or features.shape[0] == 0:
        raise ValidationError(
            f"encode: features must be a nonempty (T_in, F) array, got shape {features.shape}"
        )
    in_width = nodes.lstm.layers[0]["w_x"].shape[1]
    if features.shape[1] * nodes.stack_factor != in_width:
        raise ShapeError(
            f"encode: feature width {features.shape[1]} x factor "
            f"{nodes.stack_factor} != LSTM input width {in_width}"
        )
    if features.shape[0] < nodes.stack_factor:
        raise ValidationError(
            f"encode: need at least {nodes.stack_factor} frames, got {features.shape[0]}"
        )
    frames = stack_frames(features, nodes.stack_factor)
    rows = run_lstm_stack(nodes.lstm, frames)
    return ad.concat([ad.matmul(nodes.out, h)[None] for h in rows])


def predict_states(labels, nodes: PredictorNodes) -> ad.Node:
    """Text representation grid (U+1, D_pred).

    Row 0 is the state after the start symbol alone; row u additionally
    conditions on labels[0:u]. Running on a prefix reproduces the leading
    rows of the full call exactly.
    """
    labels = [int(y) for y in labels]
    v = nodes.table.vocab_size
    for y in labels:
        if not 0 <= y < v:
            raise ValidationError(
                f"predict_states: label {y} outside vocabulary 0..{v - 1}"
            )
    tokens = [nodes.table.start_row] + labels
    embeds = ad.index_select(nodes.embed, tokens, axis=0)
    rows = run_lstm_stack(nodes.lstm, [embeds[u] for u in range(len(tokens))])
    return ad.concat([h[None] for h in rows])
