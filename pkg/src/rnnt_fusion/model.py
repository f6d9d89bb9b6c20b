"""The full transducer: encoder + prediction network + joint + output.

Owns every parameter as a long-lived graph leaf. Each loss evaluation
builds a fresh graph over those leaves, so backward() maps cleanly onto
named parameters and an optimizer can update the leaf arrays in place
between steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import layers, regularizer, transducer
from .data import Utterance
from .errors import ConfigError
from .fusion import FusionNodes, FusionSpec, fuse_grid, init_fusion, output_logprobs
from .rng import Stream, glorot


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    feature_width: int
    d_enc: int = 32
    d_pred: int = 32
    d_joint: int = 32
    d_rank: int | None = 32
    fusion_kind: str = "fc-add"
    fusion_bias: bool = False
    embed_dim: int | None = None  # defaults to d_pred
    enc_hidden: int = 32
    enc_layers: int = 2
    pred_hidden: int = 64
    pred_layers: int = 1
    stack_factor: int = 1

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ConfigError("vocab_size must be >= 1")
        if self.stack_factor < 1:
            raise ConfigError("stack_factor must be >= 1")

    def fusion_spec(self) -> FusionSpec:
        rank = self.d_rank if self.fusion_kind in ("bilinear-lowrank", "combination") else None
        return FusionSpec(
            kind=self.fusion_kind,
            d_enc=self.d_enc,
            d_pred=self.d_pred,
            d_joint=self.d_joint,
            d_rank=rank,
            bias=self.fusion_bias,
        )


class TransducerModel:
    """Seeded construction; all randomness flows from ``seed``."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        stream = Stream(seed, index=0xC0FFEE)
        spec = config.fusion_spec()

        enc_params = layers.EncoderParams(
            stack_factor=config.stack_factor,
            lstm=layers.init_lstm(
                stream,
                config.feature_width * config.stack_factor,
                config.enc_hidden,
                config.enc_layers,
            ),
            out=glorot(stream, config.d_enc, config.enc_hidden),
        )
        embed_dim = config.embed_dim or config.d_pred
        table = layers.EmbeddingTable(
            glorot(stream, config.vocab_size + 2, embed_dim)
        )
        pred_params = layers.init_lstm(
            stream, embed_dim, config.pred_hidden, config.pred_layers,
            proj_dim=config.d_pred,
        )
        self.encoder = layers.EncoderNodes(enc_params)
        self.predictor = layers.PredictorNodes(pred_params, table)
        self.fusion = FusionNodes(spec, init_fusion(spec, stream))
        k = config.vocab_size + 1
        self.w_out = ad.parameter(glorot(stream, k, config.d_joint), name="out.w_out")
        self.blank_id = config.vocab_size  # classes 0..|V|-1 are labels

    # -- parameter registry -------------------------------------------------

    def parameters(self) -> dict[str, ad.Node]:
        out: dict[str, ad.Node] = {}
        out.update(self.encoder.named())
        out.update(self.predictor.named())
        out.update(self.fusion.named())
        out[self.w_out.name] = self.w_out
        return out

    def prediction_parameter_names(self) -> set[str]:
        return {name for name in self.parameters() if name.startswith("pred.")}

    # -- graph-building forwards --------------------------------------------

    def encode(self, features: np.ndarray) -> ad.Node:
        return layers.encode(ad.constant(features), self.encoder)

    def predict(self, labels) -> ad.Node:
        return layers.predict_states(labels, self.predictor)

    def lattice(self, features: np.ndarray, labels,
                step: int | None = None,
                schedule: regularizer.Schedule | None = None) -> transducer.LogProbLattice:
        h_enc = self.encode(features)
        h_pred = self.predict(labels)
        if schedule is not None and step is not None:
            h_pred = regularizer.apply(h_pred, step, schedule)
        return transducer.build_lattice(
            h_enc, h_pred, self.fusion, self.w_out, labels, self.blank_id
        )

    def loss(self, utterance: Utterance, step: int | None = None,
             schedule: regularizer.Schedule | None = None) -> ad.Node:
        return transducer.rnnt_neg_log_likelihood(
            self.lattice(utterance.features, utterance.labels, step, schedule)
        )

    def batch_loss(self, utterances, step: int | None = None,
                   schedule: regularizer.Schedule | None = None) -> ad.Node:
        """Arithmetic mean of per-utterance losses, in utterance order."""
        losses = [self.loss(utt, step, schedule)[None] for utt in utterances]
        total = ad.reduce_sum(ad.concat(losses))
        return ad.hadamard(ad.constant(1.0 / len(losses)), total)

    def internal_lm_logprobs(self, labels) -> ad.Node:
        """(U+1, K) text-only distributions: the acoustic row is zeroed.

        Equals the full pipeline with h_enc forced to the zero vector at
        every t, hence independent of any acoustic input.
        """
        h_pred = self.predict(labels)
        zero_enc = ad.constant(np.zeros((1, self.config.d_enc)))
        grid = output_logprobs(fuse_grid(zero_enc, h_pred, self.fusion), self.w_out)
        return grid[0]

    # -- plain-array forwards for decoding ----------------------------------

    def encode_array(self, features: np.ndarray) -> np.ndarray:
        return self.encode(features).value

    def pred_start(self):
        """Initial prediction state: start symbol consumed, nothing else."""
        state = [
            (ad.constant(np.zeros(self.predictor.lstm.hidden)),) * 2
            for _ in self.predictor.lstm.layers
        ]
        return self._pred_step(state, self.predictor.table.start_row)

    def pred_advance(self, state, label: int):
        return self._pred_step(state, int(label))

    def _pred_step(self, state, row: int):
        x = self.predictor.embed[row]
        new_state = []
        h = x
        for layer_nodes, layer_state in zip(self.predictor.lstm.layers, state):
            layer_state, h = layers.lstm_step(layer_nodes, layer_state, h)
            new_state.append(layer_state)
        if self.predictor.lstm.proj is not None:
            h = ad.matmul(self.predictor.lstm.proj, h)
        return new_state, h.value

    def joint_logprobs_array(self, h_enc_row: np.ndarray,
                             h_pred_row: np.ndarray) -> np.ndarray:
        h = fuse_grid(
            ad.constant(h_enc_row[None, :]),
            ad.constant(h_pred_row[None, :]),
            self.fusion,
        )
        return output_logprobs(h, self.w_out).value[0, 0]
