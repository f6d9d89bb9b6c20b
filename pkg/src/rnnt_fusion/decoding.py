"""Greedy transducer decoding and error-rate metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass
class Hypothesis:
    """Decoded label sequence (no blanks) and its accumulated log-prob."""

    labels: list[int] = field(default_factory=list)
    logprob: float = 0.0


def greedy_decode(model, features: np.ndarray,
                  max_symbols_per_frame: int = 3) -> Hypothesis:
    """Best-first decode: emit argmax symbols until blank wins.

    At each acoustic row, up to ``max_symbols_per_frame`` non-blank
    symbols are emitted (each updating the prediction state) before time
    advances; the cap prevents infinite emission loops on untrained
    models. Ties break toward the lowest class index. Deterministic given
    the model and input.
    """
    if max_symbols_per_frame < 1:
        raise ValidationError("greedy_decode: max_symbols_per_frame must be >= 1")
    h_enc = model.encode_array(features)  # (T, D_enc)
    hyp = Hypothesis()
    blank = model.blank_id
    state, h_pred = model.pred_start()
    for t in range(h_enc.shape[0]):
        for _ in range(max_symbols_per_frame):
            logprobs = model.joint_logprobs_array(h_enc[t], h_pred)  # (K,)
            k = int(np.argmax(logprobs))
            hyp.logprob += float(logprobs[k])
            if k == blank:
                break
            hyp.labels.append(k)
            state, h_pred = model.pred_advance(state, k)
    return hyp


def edit_distance(ref, hyp) -> int:
    """Levenshtein distance with unit-cost insert/delete/substitute."""
    ref = list(ref)
    hyp = list(hyp)
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, start=1):
        cur = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, start=1):
            cur[j] = min(
                prev[j] + 1,  # delete r
                cur[j - 1] + 1,  # insert h
                prev[j - 1] + (0 if r == h else 1),
            )
        prev = cur
    return prev[-1]


def wer(refs, hyps) -> float:
    """100 x total edit distance / total reference length."""
    refs = list(refs)
    hyps = list(hyps)
    if len(refs) != len(hyps):
        raise ValidationError(
            f"wer: {len(refs)} references vs {len(hyps)} hypotheses"
        )
    total_ref = sum(len(list(r)) for r in refs)
    if total_ref == 0:
        raise ValidationError("wer: total reference length is zero")
    total_err = sum(edit_distance(r, h) for r, h in zip(refs, hyps))
    return 100.0 * total_err / total_ref
