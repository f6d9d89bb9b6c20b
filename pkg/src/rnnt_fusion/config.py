"""Experiment configuration files.

Flat ``[section] key = value`` text. Unknown sections or keys are
rejected; missing keys fall back to desk-scale defaults and each fallback
is logged once. A single ``seed`` under ``[train]`` drives every random
draw (init and data); ``--seed`` on the command line overrides it.
"""

from __future__ import annotations

import configparser
import io
import logging

from .data import TaskConfig
from .errors import ConfigError
from .fusion import FUSION_KINDS
from .model import ModelConfig
from .regularizer import Schedule
from .trainer import TrainConfig

log = logging.getLogger(__name__)

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}

# section -> key -> (parser, default); None default = computed later
_SCHEMA: dict[str, dict[str, tuple]] = {
    "task": {
        "vocab_size": (int, 8),
        "feature_width": (int, None),  # vocab_size + 4
        "frames_per_label_min": (int, 1),
        "frames_per_label_max": (int, 1),
        "noise_std": (float, 0.0),
        "silence_prob": (float, 0.0),
        "label_len_min": (int, 1),
        "label_len_max": (int, 4),
    },
    "model": {
        "d_enc": (int, 32),
        "d_pred": (int, 32),
        "embed_dim": (int, None),  # d_pred
        "enc_hidden": (int, 32),
        "enc_layers": (int, 2),
        "pred_hidden": (int, 64),
        "pred_layers": (int, 1),
        "stack_factor": (int, 1),
    },
    "fusion": {
        "kind": (str, "fc-add"),
        "d_joint": (int, 32),
        "d_rank": (int, 32),
        "bias": (bool, False),
    },
    "reg": {
        "enabled": (bool, True),
        "m1": (int, 250),
        "m2": (int, 2000),
    },
    "train": {
        "seed": (int, 0),
        "learning_rate": (float, 1e-3),
        "beta1": (float, 0.9),
        "beta2": (float, 0.999),
        "epsilon": (float, 1e-8),
        "grad_clip": (float, 0.0),
        "batch_size": (int, 16),
        "total_steps": (int, 2000),
        "eval_every": (int, 200),
        "n_train": (int, 512),
        "n_dev": (int, 64),
        "max_symbols_per_frame": (int, 3),
    },
}


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def _read_sections(text: str) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    return {s: dict(parser.items(s)) for s in parser.sections()}


def parse_config(text: str, seed_override: int | None = None) -> TrainConfig:
    raw = _read_sections(text)
    for section in raw:
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
    values: dict[str, dict] = {}
    defaulted: list[str] = []
    for section, keys in _SCHEMA.items():
        given = raw.get(section, {})
        for key in given:
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
        out = {}
        for key, (typ, default) in keys.items():
            if key in given:
                try:
                    out[key] = _parse_bool(given[key]) if typ is bool else typ(given[key])
                except ConfigError:
                    raise
                except ValueError:
                    raise ConfigError(
                        f"bad value for {section}.{key}: {given[key]!r}"
                    ) from None
            else:
                out[key] = default
                defaulted.append(f"{section}.{key}")
        values[section] = out

    seed = values["train"]["seed"] if seed_override is None else int(seed_override)
    if values["task"]["feature_width"] is None:
        values["task"]["feature_width"] = values["task"]["vocab_size"] + 4
    if values["model"]["embed_dim"] is None:
        values["model"]["embed_dim"] = values["model"]["d_pred"]
    if defaulted:
        log.info("using defaults for: %s", ", ".join(defaulted))

    t = values["task"]
    task = TaskConfig(
        vocab_size=t["vocab_size"],
        feature_width=t["feature_width"],
        frames_per_label=(t["frames_per_label_min"], t["frames_per_label_max"]),
        noise_std=t["noise_std"],
        silence_prob=t["silence_prob"],
        label_len=(t["label_len_min"], t["label_len_max"]),
        seed=seed,
    )
    m, f = values["model"], values["fusion"]
    if f["kind"] not in FUSION_KINDS:
        raise ConfigError(f"unknown fusion kind {f['kind']!r}")
    model = ModelConfig(
        vocab_size=t["vocab_size"],
        feature_width=t["feature_width"],
        d_enc=m["d_enc"],
        d_pred=m["d_pred"],
        d_joint=f["d_joint"],
        d_rank=f["d_rank"],
        fusion_kind=f["kind"],
        fusion_bias=f["bias"],
        embed_dim=m["embed_dim"],
        enc_hidden=m["enc_hidden"],
        enc_layers=m["enc_layers"],
        pred_hidden=m["pred_hidden"],
        pred_layers=m["pred_layers"],
        stack_factor=m["stack_factor"],
    )
    r, tr = values["reg"], values["train"]
    return TrainConfig(
        model=model,
        task=task,
        schedule=Schedule(m1=r["m1"], m2=r["m2"]),
        reg_enabled=r["enabled"],
        learning_rate=tr["learning_rate"],
        beta1=tr["beta1"],
        beta2=tr["beta2"],
        epsilon=tr["epsilon"],
        grad_clip=tr["grad_clip"],
        batch_size=tr["batch_size"],
        total_steps=tr["total_steps"],
        eval_every=tr["eval_every"],
        n_train=tr["n_train"],
        n_dev=tr["n_dev"],
        seed=seed,
        max_symbols_per_frame=tr["max_symbols_per_frame"],
    )


def load_config(path, seed_override: int | None = None) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read(), seed_override)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)  # shortest exact round-trip
    return str(value)


def dump_config(config: TrainConfig) -> str:
    """Effective configuration as config-file text; reparses identically."""
    t, m = config.task, config.model
    sections = {
        "task": {
            "vocab_size": t.vocab_size,
            "feature_width": t.feature_width,
            "frames_per_label_min": t.frames_per_label[0],
            "frames_per_label_max": t.frames_per_label[1],
            "noise_std": t.noise_std,
            "silence_prob": t.silence_prob,
            "label_len_min": t.label_len[0],
            "label_len_max": t.label_len[1],
        },
        "model": {
            "d_enc": m.d_enc,
            "d_pred": m.d_pred,
            "embed_dim": m.embed_dim or m.d_pred,
            "enc_hidden": m.enc_hidden,
            "enc_layers": m.enc_layers,
            "pred_hidden": m.pred_hidden,
            "pred_layers": m.pred_layers,
            "stack_factor": m.stack_factor,
        },
        "fusion": {
            "kind": m.fusion_kind,
            "d_joint": m.d_joint,
            "d_rank": m.d_rank if m.d_rank is not None else 32,
            "bias": m.fusion_bias,
        },
        "reg": {
            "enabled": config.reg_enabled,
            "m1": config.schedule.m1,
            "m2": config.schedule.m2,
        },
        "train": {
            "seed": config.seed,
            "learning_rate": config.learning_rate,
            "beta1": config.beta1,
            "beta2": config.beta2,
            "epsilon": config.epsilon,
            "grad_clip": config.grad_clip,
            "batch_size": config.batch_size,
            "total_steps": config.total_steps,
            "eval_every": config.eval_every,
            "n_train": config.n_train,
            "n_dev": config.n_dev,
            "max_symbols_per_frame": config.max_symbols_per_frame,
        },
    }
    buf = io.StringIO()
    for name, keys in sections.items():
        buf.write(f"[{name}]\n")
        for key, value in keys.items():
            buf.write(f"{key} = {_fmt(value)}\n")
        buf.write("\n")
    return buf.getvalue()
