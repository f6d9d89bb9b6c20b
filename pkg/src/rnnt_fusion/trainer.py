"""Adam training loop, metrics, and binary checkpoints.

The loop is bitwise reproducible: batches are fixed functions of the step
index, the corpus is counter-generated, and parameter updates run in
sorted-name order. Resuming from a checkpoint at step s therefore
continues the uninterrupted trajectory exactly.

Checkpoint format (little-endian throughout): magic ``RNTJ``, version u32,
entry count u32; each entry is name length u16, UTF-8 name, rank u8,
extents as u64 each, then the payload as row-major f64. Entries cover the
named parameters, both Adam moment sets, and the step index.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .data import TaskConfig, generate, split
from .decoding import greedy_decode, wer
from .errors import CheckpointFormatError, ConfigError, ValidationError
from .model import ModelConfig, TransducerModel
from .regularizer import Schedule, alpha_at

CHECKPOINT_MAGIC = b"RNTJ"
CHECKPOINT_VERSION = 1

METRICS_HEADER = "step,train_loss,dev_loss,dev_wer,alpha,lr"


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig
    task: TaskConfig
    schedule: Schedule = Schedule(m1=250, m2=2000)
    reg_enabled: bool = True
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    grad_clip: float = 0.0  # 0 disables clipping
    batch_size: int = 16
    total_steps: int = 2000
    eval_every: int = 200
    n_train: int = 512
    n_dev: int = 64
    seed: int = 0
    max_symbols_per_frame: int = 3

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ConfigError("need 0 < beta1, beta2 < 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 1 or self.total_steps < 0 or self.eval_every < 1:
            raise ConfigError("batch_size >= 1, total_steps >= 0, eval_every >= 1")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def zeros_like(cls, params: dict[str, ad.Node]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p.value) for k, p in params.items()},
            v={k: np.zeros_like(p.value) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, ad.Node],
    grads: dict[str, np.ndarray],
    moments: AdamState,
    step: int,
    config: TrainConfig,
) -> None:
    """One bias-corrected Adam update, applied in sorted-name order."""
    if step < 1:
        raise ConfigError(f"adam_step: step must be >= 1, got {step}")
    b1, b2, lr, eps = config.beta1, config.beta2, config.learning_rate, config.epsilon
    for name in sorted(params):
        p = params[name]
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.value.shape:
            raise ValidationError(
                f"adam_step: grad shape {g.shape} != param shape {p.value.shape} for {name}"
            )
        if config.grad_clip > 0.0:
            norm = float(np.sqrt(np.sum(g * g)))
            if norm > config.grad_clip:
                g = g * (config.grad_clip / norm)
        m = moments.m[name] = b1 * moments.m[name] + (1.0 - b1) * g
        v = moments.v[name] = b2 * moments.v[name] + (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1**step)
        v_hat = v / (1.0 - b2**step)
        p.value = p.value - lr * m_hat / (np.sqrt(v_hat) + eps)


@dataclass
class Checkpoint:
    step: int
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    entries: list[tuple[str, np.ndarray]] = [("step", np.asarray(float(ckpt.step)))]
    for name in sorted(ckpt.params):
        entries.append((f"param.{name}", ckpt.params[name]))
    for name in sorted(ckpt.adam_m):
        entries.append((f"adam.m.{name}", ckpt.adam_m[name]))
    for name in sorted(ckpt.adam_v):
        entries.append((f"adam.v.{name}", ckpt.adam_v[name]))
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(entries)))
        for name, arr in entries:
            raw = name.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            arr = np.asarray(arr, dtype=np.float64)
            if arr.ndim > 0:
                arr = np.ascontiguousarray(arr)
            f.write(struct.pack("<B", arr.ndim))
            for extent in arr.shape:
                f.write(struct.pack("<Q", extent))
            f.write(arr.tobytes(order="C"))


def load_checkpoint(path) -> Checkpoint:
    blob = Path(path).read_bytes()
    offset = 0

    def need(n: int, what: str) -> bytes:
        nonlocal offset
        if offset + n > len(blob):
            raise CheckpointFormatError(f"truncated while reading {what}", offset)
        piece = blob[offset : offset + n]
        offset += n
        return piece

    if need(4, "magic") != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(
            f"bad magic, expected {CHECKPOINT_MAGIC!r}", 0
        )
    (version,) = struct.unpack("<I", need(4, "version"))
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported version {version}", 4)
    (count,) = struct.unpack("<I", need(4, "entry count"))
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", need(2, "name length"))
        name = need(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<B", need(1, "rank"))
        shape = tuple(
            struct.unpack("<Q", need(8, f"extent of {name}"))[0] for _ in range(rank)
        )
        n_values = int(np.prod(shape)) if shape else 1
        payload = need(8 * n_values, f"payload of {name}")
        entries[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    if offset != len(blob):
        raise CheckpointFormatError(
            f"{len(blob) - offset} trailing bytes after last entry", offset
        )
    if "step" not in entries:
        raise CheckpointFormatError("missing step entry", offset)
    params, adam_m, adam_v = {}, {}, {}
    for name, arr in entries.items():
        if name.startswith("param."):
            params[name[len("param.") :]] = arr
        elif name.startswith("adam.m."):
            adam_m[name[len("adam.m.") :]] = arr
        elif name.startswith("adam.v."):
            adam_v[name[len("adam.v.") :]] = arr
    return Checkpoint(
        step=int(entries["step"].flat[0]), params=params, adam_m=adam_m,
        adam_v=adam_v,
    )


@dataclass
class MetricsRow:
    step: int
    train_loss: float
    dev_loss: float
    dev_wer: float
    alpha: float
    lr: float

    def format(self) -> str:
        return (
            f"{self.step},{self.train_loss:.9g},{self.dev_loss:.9g},"
            f"{self.dev_wer:.9g},{self.alpha:.9g},{self.lr:.9g}"
        )


@dataclass
class TrainResult:
    history: list[MetricsRow] = field(default_factory=list)
    final_dev_loss: float = math.nan
    final_dev_wer: float = math.nan
    model: "TransducerModel | None" = None

    def metrics_csv(self) -> str:
        return "\n".join([METRICS_HEADER] + [r.format() for r in self.history]) + "\n"


def batch_indices(step: int, batch_size: int, n_train: int) -> list[int]:
    """Deterministic wrap-around block of train indices for one step."""
    base = (step - 1) * batch_size
    return [(base + j) % n_train for j in range(batch_size)]


def evaluate(model: TransducerModel, config: TrainConfig,
              dev_range: range) -> tuple[float, float]:
    losses = []
    refs, hyps = [], []
    for idx in dev_range:
        utt = generate(config.task, idx)
        losses.append(float(model.loss(utt).value))
        refs.append(utt.labels)
        hyps.append(
            greedy_decode(model, utt.features, config.max_symbols_per_frame).labels
        )
    return float(np.mean(losses)), wer(refs, hyps)


def train(config: TrainConfig, out_dir=None,
          resume_from=None) -> TrainResult:
    """Run the loop; returns metrics history and writes artifacts.

    With ``out_dir`` set, writes ``metrics.csv`` and ``final.ckpt`` there.
    ``resume_from`` restores parameters, moments, and the step counter from
    a checkpoint and continues as if the run had never stopped.
    """
    model = TransducerModel(config.model, seed=config.seed)
    params = model.parameters()
    moments = AdamState.zeros_like(params)
    start_step = 0
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        restore_model(model, ckpt)
        moments = AdamState(m=dict(ckpt.adam_m), v=dict(ckpt.adam_v))
        start_step = ckpt.step
        params = model.parameters()

    train_range, dev_range = split(config.n_train, config.n_dev)
    schedule = config.schedule if config.reg_enabled else None
    result = TrainResult(model=model)

    for step in range(start_step + 1, config.total_steps + 1):
        batch = [
            generate(config.task, train_range[i])
            for i in batch_indices(step, config.batch_size, config.n_train)
        ]
        loss = model.batch_loss(batch, step=step, schedule=schedule)
        train_loss = float(loss.value)
        if not math.isfinite(train_loss):
            raise ValidationError(
                f"non-finite loss {train_loss} at step {step}, batch indices "
                f"{batch_indices(step, config.batch_size, config.n_train)}"
            )
        node_grads = ad.backward(loss)
        grads = {node.name: g for node, g in node_grads.items()}
        adam_step(params, grads, moments, step, config)
        if step % config.eval_every == 0 or step == config.total_steps:
            dev_loss, dev_wer = evaluate(model, config, dev_range)
            alpha = alpha_at(step, config.schedule) if config.reg_enabled else 1.0
            result.history.append(
                MetricsRow(step, train_loss, dev_loss, dev_wer, alpha,
                           config.learning_rate)
            )
            result.final_dev_loss = dev_loss
            result.final_dev_wer = dev_wer

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(result.metrics_csv())
        save_checkpoint(out / "final.ckpt", snapshot(model, moments,
                                                     max(start_step, config.total_steps)))
    return result


def snapshot(model: TransducerModel, moments: AdamState, step: int) -> Checkpoint:
    return Checkpoint(
        step=step,
        params={name: np.array(node.value) for name, node in model.parameters().items()},
        adam_m={k: np.array(v) for k, v in moments.m.items()},
        adam_v={k: np.array(v) for k, v in moments.v.items()},
    )


def restore_model(model: TransducerModel, ckpt: Checkpoint) -> None:
    params = model.parameters()
    missing = set(params) ^ set(ckpt.params)
    if missing:
        raise ValidationError(f"checkpoint/model parameter mismatch: {sorted(missing)}")
    for name, node in params.items():
        arr = ckpt.params[name]
        if arr.shape != node.value.shape:
            raise ValidationError(
                f"checkpoint param {name}: shape {arr.shape} != {node.value.shape}"
            )
        node.value = np.array(arr)
