import numpy as np
import pytest

from sdae.dataset import CorruptionSpec, DataError, epoch_stream
from sdae.linalg import DimensionError
from sdae.network import (
    CROSSENTROPY_SOFTMAX,
    DenseLayer,
    StackedAutoencoder,
    encode_all,
    flatten_params,
    init_layer,
)
from sdae.sgd import (
    LayerSpec,
    RunRecord,
    SgdConfig,
    classify,
    fine_tune,
    one_hot,
    pretrain_stack,
    train_layer_sgd,
)
from sdae.evalx import accuracy


def sig(v):
    return 1.0 / (1.0 + np.exp(-v))


def synthetic(rng, count=20, m=16):
    return rng.random((count, m))


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SgdConfig(epochs=0)
        with pytest.raises(ValueError):
            SgdConfig(learning_rate=-0.1)
        assert SgdConfig(learning_rate=0.0).learning_rate == 0.0


class TestRunRecord:
    def test_csv_round_trip(self):
        rec = RunRecord()
        rec.append(1, 0.5, 1234.5678)
        rec.append(2, 1.25, 99.0)
        text = rec.to_csv()
        assert text == "epoch,seconds,error\n1,0.5,1234.57\n2,1.25,99\n"
        back = RunRecord.from_csv(text)
        assert back.epochs == [1, 2] and back.errors == [1234.57, 99.0]
        assert back.epoch_seconds() == [0.5, 0.75]

    def test_rejects_other_csv(self):
        with pytest.raises(ValueError):
            RunRecord.from_csv("a,b\n1,2\n")


class TestTrainLayer:
    def test_descends(self, rng):
        X = synthetic(rng)
        layer = init_layer(16, 8, np.random.default_rng(0))
        rec = train_layer_sgd(layer, X, SgdConfig(0.1, 10, CorruptionSpec(0.25), seed=1))
        assert len(rec) == 10 and rec.epochs == list(range(1, 11))
        assert rec.errors[-1] < rec.errors[0]
        assert all(b >= a for a, b in zip(rec.seconds, rec.seconds[1:]))

    def test_zero_eta_is_deterministic_and_inert(self, rng):
        X = synthetic(rng)
        runs = []
        for _ in range(2):
            layer = init_layer(16, 8, np.random.default_rng(0))
            before = flatten_params(layer)
            runs.append(train_layer_sgd(layer, X, SgdConfig(0.0, 1, seed=3)).errors)
            assert np.array_equal(flatten_params(layer), before)
        assert runs[0] == runs[1]

    def test_error_equals_replayed_losses(self, rng):
        X = synthetic(rng)
        cfg = SgdConfig(0.05, 3, CorruptionSpec(0.3), seed=7)
        layer = init_layer(16, 8, np.random.default_rng(2))
        shadow = layer.copy()
        rec = train_layer_sgd(layer, X, cfg)
        # replay the cached corruption stream with plain numpy forward passes and an exact-gradient step
        for epoch in range(cfg.epochs):
            total = 0.0
            for _, _, xc, x in epoch_stream(X, cfg.corruption, cfg.seed, epoch, True):
                y = sig(shadow.W @ xc + shadow.b)
                z = sig(shadow.W.T @ y + shadow.b_prime)
                total += 0.5 * np.sum((x - z) ** 2)
                dO = (z - x) * z * (1 - z)
                shadow.W -= cfg.learning_rate * np.outer(y, dO)
                shadow.b_prime -= cfg.learning_rate * dO
                dH = (shadow.W @ dO) * y * (1 - y)
                shadow.W -= cfg.learning_rate * np.outer(dH, xc)
                shadow.b -= cfg.learning_rate * dH
            assert total == pytest.approx(rec.errors[epoch], abs=1e-9)
        assert np.allclose(flatten_params(shadow), flatten_params(layer), rtol=0, atol=1e-12)

    def test_fresh_masks_each_epoch(self, rng):
        X = np.ones((5, 40))
        spec = CorruptionSpec(0.5)
        m0 = np.array([xc for _, _, xc, _ in epoch_stream(X, spec, 1, 0, False)])
        m1 = np.array([xc for _, _, xc, _ in epoch_stream(X, spec, 1, 1, False)])
        assert not np.array_equal(m0, m1)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionError):
            train_layer_sgd(init_layer(10, 4, rng), synthetic(rng), SgdConfig())


class TestPretrain:
    def test_single_spec_reduces_to_train_layer(self, rng):
        X = synthetic(rng)
        cfg = SgdConfig(0.1, 2, CorruptionSpec(0.2), seed=4)
        stack = pretrain_stack([LayerSpec(8, 0.2, cfg)], X)
        layer = init_layer(16, 8, np.random.default_rng(4))
        train_layer_sgd(layer, X, cfg)
        assert np.array_equal(flatten_params(stack.layers[0]), flatten_params(layer))

    def test_second_layer_trains_on_clean_encodings(self, mnist):
        X = mnist.images[:1000]
        cfg = SgdConfig(0.01, 1, seed=0)
        records = []
        stack = pretrain_stack([LayerSpec(200, 0.1, cfg), LayerSpec(100, 0.2, cfg)], X, records)
        assert [ly.W.shape for ly in stack.layers] == [(200, 784), (100, 200)]
        assert len(records) == 2
        H = encode_all(StackedAutoencoder(stack.layers[:1]), X)
        assert H.shape == (1000, 200)
        second = init_layer(200, 100, np.random.default_rng(0))
        train_layer_sgd(second, H, SgdConfig(0.01, 1, CorruptionSpec(0.2), seed=0))
        assert np.array_equal(flatten_params(second), flatten_params(stack.layers[1]))

    def test_empty(self, rng):
        with pytest.raises(ValueError):
            pretrain_stack([], synthetic(rng))


class TestFineTune:
    def test_head_only_softmax_baseline(self, mnist):
        train, test = mnist.subset(0, 2000), mnist.subset(2000, 3000)
        stack = StackedAutoencoder()
        fine_tune(stack, train, [10], SgdConfig(0.01, 30, seed=0), CROSSENTROPY_SOFTMAX)
        assert accuracy(stack, test) >= 0.85

    def test_zero_eta_is_chance(self, mnist):
        train = mnist.subset(0, 1000)
        stack = StackedAutoencoder([init_layer(784, 50, np.random.default_rng(0))])
        fine_tune(stack, train, [20, 10], SgdConfig(0.0, 1, seed=0))
        assert abs(accuracy(stack, train) - 0.1) < 0.05

    def test_decode_bias_frozen_and_encoders_move(self, mnist):
        data = mnist.subset(0, 50)
        stack = StackedAutoencoder([init_layer(784, 30, np.random.default_rng(0)),
                                    init_layer(30, 20, np.random.default_rng(1))])
        bps = [ly.b_prime.copy() for ly in stack.layers]
        Ws = [ly.W.copy() for ly in stack.layers]
        rec = fine_tune(stack, data, [10], SgdConfig(0.1, 2, seed=0))
        assert len(rec) == 2
        for ly, bp, W in zip(stack.layers, bps, Ws):
            assert np.array_equal(ly.b_prime, bp)
            assert not np.array_equal(ly.W, W)

    def test_descends_on_tiny_problem(self, mnist):
        data = mnist.subset(0, 100)
        stack = StackedAutoencoder([init_layer(784, 40, np.random.default_rng(0))])
        rec = fine_tune(stack, data, [10], SgdConfig(0.1, 5, seed=0))
        assert rec.errors[-1] < rec.errors[0]

    def test_bad_head(self, mnist):
        with pytest.raises(DimensionError):
            fine_tune(StackedAutoencoder(), mnist.subset(0, 5), [5], SgdConfig())
        with pytest.raises(DataError):
            fine_tune(StackedAutoencoder(), mnist.images[:5], [10], SgdConfig())
        with pytest.raises(ValueError):
            fine_tune(StackedAutoencoder(), mnist.subset(0, 5), [10], SgdConfig(), loss="hinge")


def scored_stack(bias):
    """Head whose output is sigmoid(bias) regardless of input, so classify sees ``bias`` order."""
    head = [DenseLayer(np.zeros((len(bias), 3)), np.asarray(bias, dtype=np.float64))]
    return StackedAutoencoder([], head)


class TestClassify:
    def test_one_hot(self):
        assert classify(scored_stack(one_hot(7) * 5), np.zeros(3)) == 7

    def test_ties_go_low(self):
        assert classify(scored_stack(np.zeros(10)), np.zeros(3)) == 0
        b = np.zeros(10)
        b[[3, 6]] = 1.0
        assert classify(scored_stack(b), np.zeros(3)) == 3

    def test_matches_argmax_oracle(self, rng):
        for _ in range(50):
            b = rng.standard_normal(10)
            best = max(range(10), key=lambda i: (b[i], -i))
            assert classify(scored_stack(b), np.zeros(3)) == best

    def test_missing_head(self):
        with pytest.raises(ValueError):
            classify(StackedAutoencoder([init_layer(3, 2, np.random.default_rng(0))]), np.zeros(3))
