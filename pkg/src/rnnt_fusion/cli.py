"""Command-line surface.

Subcommands: train, eval, decode, gradcheck, oracle, paramcount, report,
export. Exit codes: 0 success, 1 verification failure, 2 usage or config
error. Diagnostics go to stderr; given the same argv and config file,
every subcommand produces bitwise-identical stdout and files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .config import dump_config, load_config
from .data import Utterance, generate, split, write_csv
from .decoding import greedy_decode
from .errors import CheckpointFormatError, ConfigError, ValidationError
from .fusion import FUSION_KINDS, FusionSpec, param_count
from .model import ModelConfig, TransducerModel
from .rng import Stream
from .trainer import load_checkpoint, restore_model, train
from .transducer import LogProbLattice, enumerate_paths, rnnt_neg_log_likelihood

GRADCHECK_TOLERANCE = 1e-4
ORACLE_TOLERANCE = 1e-10


def _toy_model(kind: str, seed: int) -> TransducerModel:
    cfg = ModelConfig(
        vocab_size=5, feature_width=8, d_enc=8, d_pred=8, d_joint=8, d_rank=8,
        fusion_kind=kind, embed_dim=8, enc_hidden=8, enc_layers=1,
        pred_hidden=8, pred_layers=1, stack_factor=1,
    )
    return TransducerModel(cfg, seed=seed)


def toy_gradcheck(kind: str, trials: int, seed: int = 0,
                  step: float = 3e-4) -> float:
    """End-to-end finite-difference check on a small random model."""
    worst = 0.0
    for trial in range(trials):
        model = _toy_model(kind, seed=seed + trial)
        stream = Stream(seed + trial, index=7)
        features = np.array([[stream.gauss() for _ in range(8)] for _ in range(3)])
        labels = [stream.randint(0, 4), stream.randint(0, 4)]
        utt = Utterance(features=features, labels=labels)
        params = model.parameters()
        err = ad.finite_difference_check(
            lambda: model.loss(utt),
            [params[name] for name in sorted(params)],
            step=step,
        )
        worst = max(worst, err)
    return worst


def random_lattice(stream: Stream, t_len: int, u_len: int, k: int) -> LogProbLattice:
    logits = np.array(
        [stream.gauss() for _ in range(t_len * (u_len + 1) * k)]
    ).reshape(t_len, u_len + 1, k)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    grid = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    labels = [stream.randint(0, k - 2) for _ in range(u_len)]  # blank is k-1
    return LogProbLattice(grid=ad.constant(grid), blank_id=k - 1, labels=labels)


def oracle_deviation(trials: int, seed: int = 0) -> float:
    """Max |DP loss - enumeration loss| over random small lattices."""
    worst = 0.0
    for trial in range(trials):
        stream = Stream(seed, index=trial)
        t_len = stream.randint(1, 4)
        u_len = stream.randint(0, 3)
        k = stream.randint(2, 5)
        lattice = random_lattice(stream, t_len, u_len, k)
        dp = float(rnnt_neg_log_likelihood(lattice).value)
        brute = enumerate_paths(lattice)
        worst = max(worst, abs(dp - brute))
    return worst


def _cmd_train(args) -> int:
    config = load_config(args.config, seed_override=args.seed)
    if args.dump_config:
        sys.stdout.write(dump_config(config))
        return 0
    out_dir = Path(args.out) if args.out else None
    result = train(config, out_dir=out_dir, resume_from=args.resume)
    if out_dir is not None:
        (out_dir / "config.ini").write_text(dump_config(config))
    if result.history:
        last = result.history[-1]
        print(f"step={last.step} dev_loss={last.dev_loss:.9g} dev_wer={last.dev_wer:.9g}")
    else:
        print("no training steps run")
    return 0


def _restored_model(args) -> tuple[TransducerModel, "TrainConfig"]:
    config = load_config(args.config, seed_override=getattr(args, "seed", None))
    model = TransducerModel(config.model, seed=config.seed)
    restore_model(model, load_checkpoint(args.checkpoint))
    return model, config


def _cmd_eval(args) -> int:
    from .trainer import evaluate

    model, config = _restored_model(args)
    _, dev_range = split(config.n_train, config.n_dev)
    dev_loss, dev_wer = evaluate(model, config, dev_range)
    print(f"dev_loss={dev_loss:.9g} dev_wer={dev_wer:.9g}")
    return 0


def _cmd_decode(args) -> int:
    model, config = _restored_model(args)
    _, dev_range = split(config.n_train, config.n_dev)
    for idx in dev_range:
        utt = generate(config.task, idx)
        hyp = greedy_decode(model, utt.features, config.max_symbols_per_frame)
        print(" ".join(str(y) for y in hyp.labels))
    return 0


def _cmd_gradcheck(args) -> int:
    worst = toy_gradcheck(args.fusion, trials=args.trials, seed=args.seed,
                          step=args.step)
    print(f"max_rel_err={worst:.9g}")
    return 0 if worst <= GRADCHECK_TOLERANCE else 1


def _cmd_oracle(args) -> int:
    worst = oracle_deviation(trials=args.trials, seed=args.seed)
    print(f"max_abs_deviation={worst:.9g}")
    return 0 if worst <= ORACLE_TOLERANCE else 1


def _cmd_paramcount(args) -> int:
    rank = args.drank if args.fusion in ("bilinear-lowrank", "combination") else None
    if args.fusion in ("bilinear-lowrank", "combination") and args.drank is None:
        raise ConfigError(f"{args.fusion} requires --drank")
    spec = FusionSpec(kind=args.fusion, d_enc=args.denc, d_pred=args.dpred,
                      d_joint=args.djoint, d_rank=rank)
    print(param_count(spec))
    return 0


def _cmd_report(args) -> int:
    root = Path(args.out_dir)
    rows = []
    if root.is_dir():
        for sub in sorted(root.iterdir()):
            metrics = sub / "metrics.csv"
            ini = sub / "config.ini"
            if not (metrics.is_file() and ini.is_file()):
                continue
            lines = [ln for ln in metrics.read_text().splitlines() if ln]
            if len(lines) < 2:
                continue
            last = lines[-1].split(",")
            config = load_config(ini)
            rows.append(
                {
                    "run": sub.name,
                    "fusion": config.model.fusion_kind,
                    "reg": "on" if config.reg_enabled else "off",
                    "wer": float(last[3]),
                    "loss": float(last[2]),
                    "params": param_count(config.model.fusion_spec()),
                }
            )
    if not rows:
        raise ConfigError(f"no completed runs found under {root}")
    rows.sort(key=lambda r: (r["wer"], r["fusion"], r["reg"]))
    print("| run | fusion | regularizer | dev WER % | dev loss | joint params |")
    print("|---|---|---|---|---|---|")
    for r in rows:
        print(
            f"| {r['run']} | {r['fusion']} | {r['reg']} | {r['wer']:.9g} "
            f"| {r['loss']:.9g} | {r['params']} |"
        )
    return 0


def _cmd_export(args) -> int:
    config = load_config(args.config, seed_override=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for idx in range(args.count):
        utt = generate(config.task, idx)
        with open(out / f"utt_{idx:05d}.csv", "w", encoding="utf-8") as f:
            write_csv(utt, f)
    print(f"wrote {args.count} utterances to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rnnt-fusion",
        description="Desk-scale neural transducer with pluggable joint-network fusion",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a training experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--resume", default=None)
    p.add_argument("--dump-config", action="store_true",
                   help="print the effective configuration and exit")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="dev loss and WER of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("decode", help="print one hypothesis per dev utterance")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=_cmd_decode)

    p = sub.add_parser("gradcheck", help="finite-difference check a fusion kind")
    p.add_argument("--fusion", required=True, choices=FUSION_KINDS)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=3e-4,
                   help="central-difference step (default balances "
                        "truncation against float64 noise)")
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("oracle", help="compare DP loss against path enumeration")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_oracle)

    p = sub.add_parser("paramcount", help="exact joint-network parameter count")
    p.add_argument("--fusion", required=True, choices=FUSION_KINDS)
    p.add_argument("--denc", type=int, required=True)
    p.add_argument("--dpred", type=int, required=True)
    p.add_argument("--djoint", type=int, required=True)
    p.add_argument("--drank", type=int, default=None)
    p.set_defaults(fn=_cmd_paramcount)

    p = sub.add_parser("report", help="markdown comparison table over finished runs")
    p.add_argument("out_dir")
    p.set_defaults(fn=_cmd_report)

    p = sub.add_parser("export", help="dump generated utterances as CSV files")
    p.add_argument("--config", required=True)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=_cmd_export)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (ConfigError, CheckpointFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
