import io

import numpy as np
import pytest

from rnnt_fusion import data
from rnnt_fusion.errors import ConfigError
from rnnt_fusion.rng import Stream, mix64


class TestStream:
    def test_same_key_same_sequence(self):
        a = Stream(7, 3)
        b = Stream(7, 3)
        assert [a.next_u64() for _ in range(10)] == [b.next_u64() for _ in range(10)]

    def test_different_indices_diverge(self):
        a = Stream(7, 3)
        b = Stream(7, 4)
        assert [a.next_u64() for _ in range(4)] != [b.next_u64() for _ in range(4)]

    def test_uniform_in_unit_interval(self):
        s = Stream(1, 1)
        vals = [s.uniform() for _ in range(1000)]
        assert all(0.0 <= v < 1.0 for v in vals)
        assert 0.4 < np.mean(vals) < 0.6

    def test_randint_inclusive_bounds(self):
        s = Stream(2, 2)
        vals = [s.randint(3, 5) for _ in range(300)]
        assert set(vals) == {3, 4, 5}

    def test_mix64_is_pure(self):
        assert mix64(12345) == mix64(12345)
        assert mix64(0) != mix64(1)


def cfg(**kw):
    base = dict(vocab_size=4, feature_width=8, frames_per_label=(1, 3),
                noise_std=0.1, silence_prob=0.2, label_len=(2, 5), seed=9)
    base.update(kw)
    return data.TaskConfig(**base)


class TestGenerate:
    def test_deterministic(self):
        a = data.generate(cfg(), 5)
        b = data.generate(cfg(), 5)
        assert np.array_equal(a.features, b.features)
        assert a.labels == b.labels

    def test_noiseless_single_frame_is_exact_one_hot(self):
        config = cfg(noise_std=0.0, silence_prob=0.0, frames_per_label=(1, 1))
        utt = data.generate(config, 0)
        assert utt.features.shape == (len(utt.labels), 8)
        for row, label in zip(utt.features, utt.labels):
            expected = np.zeros(8)
            expected[label] = 1.0
            assert np.array_equal(row, expected)

    def test_frame_count_bounds(self):
        config = cfg(label_len=(2, 5), frames_per_label=(1, 3))
        for idx in range(40):
            utt = data.generate(config, idx)
            n = len(utt.labels)
            assert 2 <= n <= 5
            # noise/silence adds at most one frame per gap
            assert n * 1 <= utt.features.shape[0] <= n * 3 + (n - 1)

    def test_labels_within_vocabulary(self):
        for idx in range(40):
            utt = data.generate(cfg(), idx)
            assert all(0 <= y < 4 for y in utt.labels)

    def test_feature_width_must_fit_vocab(self):
        with pytest.raises(ConfigError):
            cfg(feature_width=3)

    def test_invalid_ranges(self):
        with pytest.raises(ConfigError):
            cfg(frames_per_label=(0, 2))
        with pytest.raises(ConfigError):
            cfg(frames_per_label=(3, 2))
        with pytest.raises(ConfigError):
            cfg(label_len=(0, 3))
        with pytest.raises(ConfigError):
            cfg(noise_std=-0.5)


class TestSplit:
    def test_ranges(self):
        train, dev = data.split(1000, 100)
        assert train == range(0, 1000)
        assert dev == range(1000, 1100)

    def test_disjoint(self):
        train, dev = data.split(50, 20)
        assert not set(train) & set(dev)

    def test_dev_differs_from_every_train_utterance(self):
        config = cfg(noise_std=0.05)
        train, dev = data.split(30, 1)
        dev_utt = data.generate(config, dev[0])
        for idx in train:
            utt = data.generate(config, idx)
            if utt.features.shape == dev_utt.features.shape:
                assert not np.array_equal(utt.features, dev_utt.features)

    def test_needs_positive_sizes(self):
        with pytest.raises(ConfigError):
            data.split(0, 5)


class TestCsvExport:
    def test_layout(self):
        config = cfg(noise_std=0.0, silence_prob=0.0, frames_per_label=(1, 1))
        utt = data.generate(config, 2)
        buf = io.StringIO()
        data.write_csv(utt, buf)
        lines = buf.getvalue().strip().split("\n")
        assert len(lines) == utt.features.shape[0] + 1
        assert [int(v) for v in lines[-1].split(",")] == utt.labels
        first = [float(v) for v in lines[0].split(",")]
        assert np.array_equal(first, utt.features[0])
