import numpy as np
import pytest

from rnnt_fusion import autodiff as ad
from rnnt_fusion import regularizer
from rnnt_fusion.data import TaskConfig, generate
from rnnt_fusion.errors import ConfigError
from rnnt_fusion.model import ModelConfig, TransducerModel


class TestAlphaAt:
    SCHED = regularizer.Schedule(m1=25_000, m2=200_000)

    def test_before_ramp(self):
        assert regularizer.alpha_at(10_000, self.SCHED) == 0.0

    def test_at_ramp_end(self):
        assert regularizer.alpha_at(200_000, self.SCHED) == 1.0

    def test_midpoint(self):
        assert regularizer.alpha_at(112_500, self.SCHED) == 0.5

    def test_monotone_nondecreasing(self):
        prev = -1.0
        for m in range(0, 240_000, 500):
            a = regularizer.alpha_at(m, self.SCHED)
            assert 0.0 <= a <= 1.0
            assert a >= prev
            prev = a

    def test_continuous_on_ramp(self):
        # adjacent integer steps move alpha by at most 1/(m2-m1)
        width = self.SCHED.m2 - self.SCHED.m1
        for m in range(24_990, 25_010):
            delta = regularizer.alpha_at(m + 1, self.SCHED) - regularizer.alpha_at(m, self.SCHED)
            assert 0.0 <= delta <= 1.0 / width + 1e-15

    def test_invalid_schedule(self):
        with pytest.raises(ConfigError):
            regularizer.Schedule(m1=100, m2=100)
        with pytest.raises(ConfigError):
            regularizer.Schedule(m1=-1, m2=100)

    def test_negative_step(self):
        with pytest.raises(ConfigError):
            regularizer.alpha_at(-1, self.SCHED)


def _model_and_utt(kind="gating", seed=0):
    cfg = ModelConfig(vocab_size=4, feature_width=5, d_enc=4, d_pred=4,
                      d_joint=4, d_rank=3, fusion_kind=kind, embed_dim=4,
                      enc_hidden=4, enc_layers=1, pred_hidden=4, pred_layers=1,
                      stack_factor=1)
    model = TransducerModel(cfg, seed=seed)
    task = TaskConfig(vocab_size=4, feature_width=5, frames_per_label=(1, 2),
                      noise_std=0.2, label_len=(2, 3), seed=31)
    return model, generate(task, 0)


def _grads_at(model, utt, step, schedule):
    loss = model.loss(utt, step=step, schedule=schedule)
    grads = ad.backward(loss)
    return float(loss.value), {n.name: g for n, g in grads.items()}


# m1=10, m2=20 puts steps 5 / 15 / 25 at alpha 0 / 0.5 / 1.
SCHED = regularizer.Schedule(m1=10, m2=20)


class TestApply:
    def test_alpha_values_at_probe_steps(self):
        assert regularizer.alpha_at(5, SCHED) == 0.0
        assert regularizer.alpha_at(15, SCHED) == 0.5
        assert regularizer.alpha_at(25, SCHED) == 1.0

    @pytest.mark.parametrize("step", [5, 15, 25])
    def test_forward_value_bitwise_invariant(self, step):
        model, utt = _model_and_utt(seed=1)
        regulated, _ = _grads_at(model, utt, step, SCHED)
        plain = float(model.loss(utt).value)
        assert regulated == plain  # bitwise as floats

    def test_full_alpha_step_identical_to_unregularized(self):
        model, utt = _model_and_utt(seed=2)
        _, with_reg = _grads_at(model, utt, 25, SCHED)
        loss = model.loss(utt)
        without = {n.name: g for n, g in ad.backward(loss).items()}
        assert set(with_reg) == set(without)
        for name in with_reg:
            assert np.array_equal(with_reg[name], without[name]), name

    def test_zero_alpha_blocks_prediction_gradients_only(self):
        model, utt = _model_and_utt(seed=3)
        _, g0 = _grads_at(model, utt, 5, SCHED)
        _, g1 = _grads_at(model, utt, 25, SCHED)
        pred_names = model.prediction_parameter_names()
        assert pred_names  # embedding + lstm + projection
        for name in g0:
            if name in pred_names:
                assert np.all(g0[name] == 0.0), name
            else:
                assert np.array_equal(g0[name], g1[name]), name

    def test_half_alpha_scales_prediction_gradients(self):
        model, utt = _model_and_utt(seed=4)
        _, gh = _grads_at(model, utt, 15, SCHED)
        _, g1 = _grads_at(model, utt, 25, SCHED)
        pred_names = model.prediction_parameter_names()
        for name in gh:
            if name in pred_names:
                assert np.all(np.abs(gh[name] - 0.5 * g1[name]) <= 1e-12), name
            else:
                # joint/output/encoder paths never traverse the scale node
                assert np.array_equal(gh[name], g1[name]), name

    @pytest.mark.parametrize("kind", ["fc-add", "bilinear-lowrank", "combination"])
    def test_gradient_scaling_across_fusion_kinds(self, kind):
        model, utt = _model_and_utt(kind=kind, seed=5)
        _, gh = _grads_at(model, utt, 15, SCHED)
        _, g1 = _grads_at(model, utt, 25, SCHED)
        for name in model.prediction_parameter_names():
            assert np.all(np.abs(gh[name] - 0.5 * g1[name]) <= 1e-12), name
