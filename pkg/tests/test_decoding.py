import numpy as np
import pytest

from rnnt_fusion import decoding
from rnnt_fusion.data import TaskConfig, generate
from rnnt_fusion.errors import ValidationError
from rnnt_fusion.model import ModelConfig, TransducerModel


def naive_distance(a, b):
    """Exponential-time recursion; independent oracle for short inputs."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    if a[0] == b[0]:
        return naive_distance(a[1:], b[1:])
    return 1 + min(
        naive_distance(a[1:], b),
        naive_distance(a, b[1:]),
        naive_distance(a[1:], b[1:]),
    )


class TestEditDistance:
    def test_identical(self):
        assert decoding.edit_distance([1, 2, 3], [1, 2, 3]) == 0

    def test_against_empty(self):
        assert decoding.edit_distance([5, 6, 7, 8], []) == 4
        assert decoding.edit_distance([], [5, 6]) == 2

    def test_kitten_sitting(self):
        kitten = list("kitten")
        sitting = list("sitting")
        assert decoding.edit_distance(kitten, sitting) == 3
        assert naive_distance(kitten, sitting) == 3

    def test_matches_naive_recursion(self):
        rng = np.random.default_rng(2)
        for _ in range(60):
            a = [int(rng.integers(0, 4)) for _ in range(int(rng.integers(0, 6)))]
            b = [int(rng.integers(0, 4)) for _ in range(int(rng.integers(0, 6)))]
            assert decoding.edit_distance(a, b) == naive_distance(a, b)

    def test_metric_properties(self):
        rng = np.random.default_rng(3)
        seqs = [
            [int(rng.integers(0, 3)) for _ in range(int(rng.integers(0, 5)))]
            for _ in range(12)
        ]
        for a in seqs:
            assert decoding.edit_distance(a, a) == 0
            for b in seqs:
                d_ab = decoding.edit_distance(a, b)
                assert d_ab == decoding.edit_distance(b, a)
                if d_ab == 0:
                    assert a == b
                for c in seqs:
                    assert d_ab <= (
                        decoding.edit_distance(a, c) + decoding.edit_distance(c, b)
                    )


class TestWer:
    def test_perfect(self):
        assert decoding.wer([[1, 2], [3]], [[1, 2], [3]]) == 0.0

    def test_all_deletions(self):
        assert decoding.wer([[1, 2], [3]], [[], []]) == 100.0

    def test_weighted_average(self):
        assert decoding.wer([[1, 2], [3, 4, 5]], [[1, 9], [3, 4, 5]]) == 20.0

    def test_mismatched_counts(self):
        with pytest.raises(ValidationError):
            decoding.wer([[1]], [[1], [2]])

    def test_zero_reference_length(self):
        with pytest.raises(ValidationError):
            decoding.wer([[], []], [[], []])


def _model(kind="fc-add", seed=0, vocab=4, bias=False):
    cfg = ModelConfig(vocab_size=vocab, feature_width=6, d_enc=4, d_pred=4,
                      d_joint=4, d_rank=3, fusion_kind=kind, embed_dim=4,
                      enc_hidden=4, enc_layers=1, pred_hidden=4, pred_layers=1,
                      stack_factor=1, fusion_bias=bias)
    return TransducerModel(cfg, seed=seed)


def _blank_dominant_model(seed=1):
    # constant positive h_joint via the fusion bias, then a heavy blank row
    model = _model(seed=seed, bias=True)
    model.fusion.nodes["w_joint_1"].value = np.zeros((4, 4))
    model.fusion.nodes["w_joint_2"].value = np.zeros((4, 4))
    model.fusion.nodes["b_joint"].value = np.ones(4)
    w = np.zeros((5, 4))
    w[4] = 50.0
    model.w_out.value = w
    return model


class TestGreedyDecode:
    def test_blank_biased_output_gives_empty_hypothesis(self):
        model = _blank_dominant_model()
        hyp = decoding.greedy_decode(model, np.ones((3, 6)))
        assert hyp.labels == []

    def test_cap_bounds_total_emissions(self):
        model = _model(seed=2)
        w = np.zeros((5, 4))
        w[1] = 50.0  # label 1 always wins; only the cap stops emission
        model.w_out.value = w
        hyp = decoding.greedy_decode(model, np.ones((3, 6)), max_symbols_per_frame=1)
        assert len(hyp.labels) <= 3
        hyp2 = decoding.greedy_decode(model, np.ones((3, 6)), max_symbols_per_frame=2)
        assert len(hyp2.labels) <= 6

    def test_cap_must_be_positive(self):
        model = _model(seed=3)
        with pytest.raises(ValidationError):
            decoding.greedy_decode(model, np.ones((2, 6)), max_symbols_per_frame=0)

    def test_deterministic(self):
        model = _model(seed=4)
        task = TaskConfig(vocab_size=4, feature_width=6, frames_per_label=(1, 2),
                          noise_std=0.3, label_len=(2, 4), seed=5)
        utt = generate(task, 3)
        h1 = decoding.greedy_decode(model, utt.features)
        h2 = decoding.greedy_decode(model, utt.features)
        assert h1.labels == h2.labels
        assert h1.logprob == h2.logprob

    def test_hand_set_grid_emits_label_then_blank(self):
        # One frame; the grid says: fresh history -> label 3, history (3,)
        # -> blank. Decoded hypothesis must be exactly [3].
        class GridStub:
            blank_id = 4

            def encode_array(self, features):
                return np.zeros((1, 1))

            def pred_start(self):
                return (), np.zeros(1)

            def pred_advance(self, state, label):
                return state + (label,), np.full(1, float(len(state) + 1))

            def joint_logprobs_array(self, h_enc_row, h_pred_row):
                logits = np.zeros(5)
                if h_pred_row[0] == 0.0:  # nothing consumed yet
                    logits[3] = 1.0
                else:
                    logits[4] = 1.0
                return logits - np.log(np.exp(logits).sum())

            def loss(self, *a, **k):  # pragma: no cover
                raise NotImplementedError

        hyp = decoding.greedy_decode(GridStub(), np.zeros((1, 1)))
        assert hyp.labels == [3]

    def test_ties_break_to_lowest_index(self):
        model = _model(seed=6)
        model.w_out.value = np.zeros((5, 4))  # uniform logits everywhere
        hyp = decoding.greedy_decode(model, np.ones((2, 6)))
        assert hyp.labels == [0, 0, 0, 0, 0, 0]  # class 0 wins every tie

    def test_logprob_accumulates_every_emission(self):
        model = _blank_dominant_model(seed=7)
        w = np.zeros((5, 4))
        w[4] = 2.0  # moderate margin keeps the blank logprob nonzero
        model.w_out.value = w
        hyp = decoding.greedy_decode(model, np.ones((3, 6)))
        assert hyp.labels == []
        # h_joint is constant, so the total is 3x one blank emission
        h_enc = model.encode_array(np.ones((3, 6)))
        _, h_pred = model.pred_start()
        per_cell = model.joint_logprobs_array(h_enc[0], h_pred)[4]
        assert per_cell < 0.0
        assert abs(hyp.logprob - 3.0 * per_cell) <= 1e-15
