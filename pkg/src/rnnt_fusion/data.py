"""Deterministic synthetic transduction corpus.

Each utterance is a label sequence plus acoustic-like frames: every label
emits a run of frames carrying its one-hot signature in the first |V|
feature dimensions, optionally corrupted by Gaussian noise, with optional
all-noise silence frames between labels. Every draw comes from a
counter-based stream keyed by (seed, utterance index), so generation is
pure: the same (config, index) yields the same bits on any platform, in
any order, from any number of threads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .rng import Stream


@dataclass(frozen=True)
class TaskConfig:
    vocab_size: int
    feature_width: int
    frames_per_label: tuple[int, int] = (1, 1)  # inclusive [r_min, r_max]
    noise_std: float = 0.0
    silence_prob: float = 0.0
    label_len: tuple[int, int] = (1, 4)  # inclusive [L_min, L_max]
    seed: int = 0

    def __post_init__(self):
        r_min, r_max = self.frames_per_label
        l_min, l_max = self.label_len
        if self.vocab_size < 1:
            raise ConfigError("vocab_size must be >= 1")
        if self.feature_width < self.vocab_size:
            raise ConfigError(
                f"feature_width {self.feature_width} < vocab_size {self.vocab_size}; "
                "one-hot signatures would not fit"
            )
        if not 1 <= r_min <= r_max:
            raise ConfigError(f"need 1 <= r_min <= r_max, got [{r_min}, {r_max}]")
        if not 1 <= l_min <= l_max:
            raise ConfigError(f"need 1 <= L_min <= L_max, got [{l_min}, {l_max}]")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        if not 0.0 <= self.silence_prob <= 1.0:
            raise ConfigError("silence_prob must be in [0, 1]")


@dataclass
class Utterance:
    features: np.ndarray  # (T_in, F)
    labels: list[int]


def _noise_frame(config: TaskConfig, stream: Stream) -> np.ndarray:
    if config.noise_std == 0.0:
        return np.zeros(config.feature_width)
    return np.array(
        [config.noise_std * stream.gauss() for _ in range(config.feature_width)]
    )


def generate(config: TaskConfig, index: int) -> Utterance:
    """Utterance number ``index`` of the corpus defined by ``config``."""
    stream = Stream(config.seed, index)
    l_min, l_max = config.label_len
    r_min, r_max = config.frames_per_label
    n_labels = stream.randint(l_min, l_max)
    labels = [stream.randint(0, config.vocab_size - 1) for _ in range(n_labels)]
    rows = []
    for pos, label in enumerate(labels):
        if pos > 0 and config.silence_prob > 0.0:
            if stream.uniform() < config.silence_prob:
                rows.append(_noise_frame(config, stream))
        run = stream.randint(r_min, r_max)
        for _ in range(run):
            frame = _noise_frame(config, stream)
            frame[label] += 1.0
            rows.append(frame)
    return Utterance(features=np.array(rows), labels=labels)


def split(n_train: int, n_dev: int) -> tuple[range, range]:
    """Disjoint index ranges; dev never overlaps train by construction."""
    if n_train < 1 or n_dev < 1:
        raise ConfigError("split: need n_train >= 1 and n_dev >= 1")
    return range(0, n_train), range(n_train, n_train + n_dev)


def write_csv(utterance: Utterance, fileobj) -> None:
    """One row per frame, then a final row holding the label ids."""
    writer = csv.writer(fileobj, lineterminator="\n")
    for row in utterance.features:
        writer.writerow([f"{v:.17g}" for v in row])
    writer.writerow([str(y) for y in utterance.labels])
