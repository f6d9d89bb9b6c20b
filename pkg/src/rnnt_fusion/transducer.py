"""Alignment lattice, marginal likelihood, and brute-force oracle.

The likelihood marginalizes over every monotone alignment between T
acoustic rows and U labels: blanks advance time, labels advance text, and
the run ends with the blank emitted from the last cell. The dynamic
program computes it in log space; :func:`enumerate_paths` recomputes it by
explicitly walking every interleaving, which is the oracle the DP is
checked against.

The DP is built from graph ops, so reverse mode supplies exact gradients;
there is no hand-coded backward pass. Pairwise logsumexp is expressed as
a - log_softmax([a, b])[0], keeping log-softmax the only exp/log site.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import SizeError, ValidationError
from .fusion import FusionNodes, fuse_grid, output_logprobs

# Sentinel standing in for log(0); normalized lattices never produce it.
NEG_INF = -1e30

# enumerate_paths is O(binomial(T+U, U)); C(14, 7) = 3432 is the ceiling.
ENUMERATION_GUARD = 14


@dataclass
class LogProbLattice:
    """T x (U+1) x K grid of output log-probabilities.

    ``grid`` is a graph node so the loss stays differentiable. ``labels``
    holds the vocabulary index of each target y_u (u = 1..U); ``blank_id``
    is the index of the blank class.
    """

    grid: ad.Node
    blank_id: int
    labels: list[int]

    @property
    def t_len(self) -> int:
        return self.grid.shape[0]

    @property
    def u_len(self) -> int:
        return len(self.labels)

    def __post_init__(self):
        if self.grid.value.ndim != 3:
            raise ValidationError(
                f"lattice: grid must be T x (U+1) x K, got shape {self.grid.shape}"
            )
        t, u1, k = self.grid.shape
        if u1 != len(self.labels) + 1:
            raise ValidationError(
                f"lattice: grid has {u1} text rows but {len(self.labels)} labels"
            )
        if not 0 <= self.blank_id < k:
            raise ValidationError(f"lattice: blank id {self.blank_id} outside 0..{k - 1}")
        for y in self.labels:
            if not 0 <= y < k or y == self.blank_id:
                raise ValidationError(f"lattice: label {y} invalid for K={k}")


def build_lattice(h_enc: ad.Node, h_pred: ad.Node, fusion: FusionNodes,
                  w_out: ad.Node, labels, blank_id: int) -> LogProbLattice:
    """Fuse every (t, u) row pair and apply the output layer.

    Cell (t, u) holds output_logprobs(fuse(h_enc[t], h_pred[u])); the grid
    is filled in one deterministic row-major sweep.
    """
    grid = output_logprobs(fuse_grid(h_enc, h_pred, fusion), w_out)
    return LogProbLattice(grid=grid, blank_id=blank_id,
                          labels=[int(y) for y in labels])


def _lse_pair(a: ad.Node, b: ad.Node) -> ad.Node:
    """logsumexp of two (1,) nodes via the stabilized log-softmax."""
    both = ad.concat([a, b])
    ls0 = ad.log_softmax(both)[0:1]
    return ad.add(a, ad.hadamard(ad.constant(-1.0), ls0))


def rnnt_neg_log_likelihood(lattice: LogProbLattice) -> ad.Node:
    """-log P(y | x) by the forward recursion over the lattice.

    alpha(t, u) is the log-probability of having consumed t frames and
    emitted u labels (t is 1-based; alpha(1, 0) = 0). Blank moves
    (t-1, u) -> (t, u) weighted by the blank log-prob at cell (t-1, u);
    label moves (t, u-1) -> (t, u) weighted by the y_u log-prob at cell
    (t, u-1). The loss is -(alpha(T, U) + blank log-prob at (T, U)).
    """
    t_len, u_len = lattice.t_len, lattice.u_len
    if t_len == 0:
        raise ValidationError("rnnt loss: lattice has no time rows")
    grid, blank = lattice.grid, lattice.blank_id

    def blank_at(t: int, u: int) -> ad.Node:
        return grid[t - 1, u, blank : blank + 1]

    def label_at(t: int, u: int) -> ad.Node:
        y = lattice.labels[u]  # y_{u+1} in 1-based terms
        return grid[t - 1, u, y : y + 1]

    alpha: dict[tuple[int, int], ad.Node] = {(1, 0): ad.constant([0.0])}
    for t in range(1, t_len + 1):
        for u in range(0, u_len + 1):
            if (t, u) == (1, 0):
                continue
            from_blank = (
                ad.add(alpha[(t - 1, u)], blank_at(t - 1, u)) if t > 1 else None
            )
            from_label = (
                ad.add(alpha[(t, u - 1)], label_at(t, u - 1)) if u > 0 else None
            )
            if from_blank is None:
                alpha[(t, u)] = from_label
            elif from_label is None:
                alpha[(t, u)] = from_blank
            else:
                alpha[(t, u)] = _lse_pair(from_blank, from_label)
    total = ad.add(alpha[(t_len, u_len)], blank_at(t_len, u_len))
    return ad.reduce_sum(ad.hadamard(ad.constant(-1.0), total))


def alignment_paths(t_len: int, u_len: int):
    """Yield every interleaving of t_len blanks (None) and u_len labels.

    Labels are represented by their position 0..u_len-1; exactly
    binomial(t_len + u_len, u_len) sequences are produced.
    """
    total = t_len + u_len
    for label_slots in itertools.combinations(range(total), u_len):
        slots = set(label_slots)
        path = []
        u = 0
        for i in range(total):
            if i in slots:
                path.append(u)
                u += 1
            else:
                path.append(None)
        yield tuple(path)


def enumerate_paths(lattice: LogProbLattice) -> float:
    """Oracle loss: sum path products over every generated interleaving.

    A walk keeps coordinates (t, u) starting at (1, 0); a blank scores the
    blank class at cell (t, u) and advances t, a label scores y_{u+1} at
    (t, u) and advances u. A label occurring after all frames are consumed
    has no cell to condition on, i.e. probability zero, so that path adds
    nothing to the sum.
    """
    t_len, u_len = lattice.t_len, lattice.u_len
    if t_len + u_len > ENUMERATION_GUARD:
        raise SizeError(
            f"enumerate_paths: T+U = {t_len + u_len} exceeds guard {ENUMERATION_GUARD}"
        )
    grid = lattice.grid.value
    blank = lattice.blank_id
    total = 0.0
    for path in alignment_paths(t_len, u_len):
        t, u = 1, 0
        logp = 0.0
        dead = False
        for sym in path:
            if sym is None:
                logp += grid[t - 1, u, blank]
                t += 1
            else:
                if t > t_len:
                    dead = True
                    break
                logp += grid[t - 1, u, lattice.labels[sym]]
                u += 1
        if not dead:
            total += np.exp(logp)
    return float(-np.log(total))
