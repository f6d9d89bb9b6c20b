import math

import numpy as np
import pytest

from rnnt_fusion import autodiff as ad
from rnnt_fusion import transducer
from rnnt_fusion.cli import random_lattice
from rnnt_fusion.errors import SizeError, ValidationError
from rnnt_fusion.model import ModelConfig, TransducerModel
from rnnt_fusion.rng import Stream


def uniform_lattice(t_len, u_len, k, labels=None):
    grid = np.full((t_len, u_len + 1, k), -math.log(k))
    labels = labels if labels is not None else [0] * u_len
    return transducer.LogProbLattice(grid=ad.constant(grid), blank_id=k - 1,
                                     labels=labels)


class TestBuildLattice:
    def _model(self, kind="fc-add", seed=0):
        cfg = ModelConfig(vocab_size=4, feature_width=5, d_enc=4, d_pred=4,
                          d_joint=4, d_rank=3, fusion_kind=kind, embed_dim=4,
                          enc_hidden=4, enc_layers=1, pred_hidden=4,
                          pred_layers=1, stack_factor=1)
        return TransducerModel(cfg, seed=seed)

    def test_single_cell_shape(self):
        model = self._model()
        lattice = model.lattice(np.zeros((1, 5)), [])
        assert lattice.grid.shape == (1, 1, 5)

    def test_ctc_degeneration_rows(self):
        model = self._model(seed=2)
        model.fusion.nodes["w_joint_2"].value = np.zeros((4, 4))
        rng = np.random.default_rng(3)
        lattice = model.lattice(rng.uniform(-1, 1, (3, 5)), [1, 2])
        grid = lattice.grid.value
        for u in range(1, 3):
            assert np.all(np.abs(grid[:, u] - grid[:, 0]) <= 1e-12)

    def test_rows_normalized(self):
        model = self._model(seed=4)
        rng = np.random.default_rng(5)
        lattice = model.lattice(rng.uniform(-1, 1, (3, 5)), [0, 3])
        sums = np.exp(lattice.grid.value).sum(axis=-1)
        assert np.all(np.abs(sums - 1.0) <= 1e-12)

    def test_label_validation(self):
        grid = np.zeros((2, 2, 3))
        with pytest.raises(ValidationError):
            transducer.LogProbLattice(grid=ad.constant(grid), blank_id=2, labels=[2])
        with pytest.raises(ValidationError):
            transducer.LogProbLattice(grid=ad.constant(grid), blank_id=5, labels=[0])
        with pytest.raises(ValidationError):
            transducer.LogProbLattice(grid=ad.constant(grid), blank_id=2, labels=[0, 1])


class TestNegLogLikelihood:
    def test_single_blank_uniform(self):
        loss = transducer.rnnt_neg_log_likelihood(uniform_lattice(1, 0, 2))
        assert abs(float(loss.value) - 0.6931471805599453) <= 1e-15

    def test_two_frames_one_label_matches_oracle(self):
        stream = Stream(17, 0)
        lattice = random_lattice(stream, 2, 1, 3)
        dp = float(transducer.rnnt_neg_log_likelihood(lattice).value)
        brute = transducer.enumerate_paths(lattice)
        assert abs(dp - brute) <= 1e-10

    def test_boosting_target_label_decreases_loss(self):
        # Renormalizing mass away from a non-target label must help.
        stream = Stream(23, 1)
        lattice = random_lattice(stream, 3, 2, 4)
        base = float(transducer.rnnt_neg_log_likelihood(lattice).value)
        grid = np.array(lattice.grid.value)
        non_target = next(
            k for k in range(3) if k not in lattice.labels
        )
        probs = np.exp(grid)
        probs[:, :, non_target] *= 0.25
        probs /= probs.sum(axis=-1, keepdims=True)
        better = transducer.LogProbLattice(
            grid=ad.constant(np.log(probs)), blank_id=3, labels=lattice.labels
        )
        lower = float(transducer.rnnt_neg_log_likelihood(better).value)
        assert lower < base

    def test_loss_positive_for_nondegenerate(self):
        stream = Stream(29, 2)
        for trial in range(20):
            lattice = random_lattice(Stream(29, trial), 2, 2, 3)
            assert float(transducer.rnnt_neg_log_likelihood(lattice).value) > 0.0

    def test_permuting_time_rows_changes_loss(self):
        stream = Stream(31, 0)
        lattice = random_lattice(stream, 3, 1, 3)
        base = float(transducer.rnnt_neg_log_likelihood(lattice).value)
        permuted = transducer.LogProbLattice(
            grid=ad.constant(np.array(lattice.grid.value)[::-1]),
            blank_id=lattice.blank_id,
            labels=lattice.labels,
        )
        assert float(transducer.rnnt_neg_log_likelihood(permuted).value) != base

    def test_gradient_matches_finite_differences(self):
        stream = Stream(37, 0)
        ref = random_lattice(stream, 3, 2, 4)
        grid = ad.parameter(np.array(ref.grid.value), name="grid")

        def loss_fn():
            lat = transducer.LogProbLattice(grid=grid, blank_id=3, labels=ref.labels)
            return transducer.rnnt_neg_log_likelihood(lat)

        assert ad.finite_difference_check(loss_fn, [grid], 1e-5) <= 1e-4


class TestEnumeration:
    def test_single_path(self):
        lattice = uniform_lattice(1, 0, 2)
        dp = float(transducer.rnnt_neg_log_likelihood(lattice).value)
        assert transducer.enumerate_paths(lattice) == pytest.approx(dp, abs=1e-15)

    @pytest.mark.parametrize("t_len,u_len,count", [
        (2, 1, 3),   # C(3,1)
        (3, 2, 10),  # C(5,2)
        (1, 0, 1),
        (4, 3, 35),  # C(7,3)
    ])
    def test_generates_binomial_many_paths(self, t_len, u_len, count):
        paths = list(transducer.alignment_paths(t_len, u_len))
        assert len(paths) == count
        assert len(set(paths)) == count
        for path in paths:
            assert sum(1 for s in path if s is None) == t_len
            assert [s for s in path if s is not None] == list(range(u_len))

    def test_guard(self):
        with pytest.raises(SizeError):
            transducer.enumerate_paths(uniform_lattice(10, 5, 2, labels=[0] * 5))

    def test_dp_equals_enumeration_on_random_lattices(self):
        worst = 0.0
        for trial in range(100):
            stream = Stream(41, trial)
            t_len = stream.randint(1, 4)
            u_len = stream.randint(0, 3)
            k = stream.randint(2, 5)
            lattice = random_lattice(stream, t_len, u_len, k)
            dp = float(transducer.rnnt_neg_log_likelihood(lattice).value)
            brute = transducer.enumerate_paths(lattice)
            worst = max(worst, abs(dp - brute))
        assert worst <= 1e-10

    def test_zero_time_rows_rejected(self):
        grid = np.zeros((1, 1, 2))
        lattice = transducer.LogProbLattice(grid=ad.constant(grid), blank_id=1,
                                            labels=[])
        lattice.grid = ad.constant(np.zeros((0, 1, 2)))
        with pytest.raises(ValidationError):
            transducer.rnnt_neg_log_likelihood(lattice)


def test_dp_uses_only_declared_op_kinds():
    stream = Stream(43, 0)
    lattice = random_lattice(stream, 3, 2, 4)
    loss = transducer.rnnt_neg_log_likelihood(lattice)
    seen = set()
    stack = [loss]
    visited = set()
    while stack:
        node = stack.pop()
        if node.id in visited:
            continue
        visited.add(node.id)
        seen.add(node.op)
        stack.extend(node.inputs)
    assert seen <= ad.OP_KINDS
