import numpy as np
import pytest

from conftest import tiny_model
from maskpool.errors import (
    CheckpointError,
    ConfigMismatchError,
    ShapeError,
    TooShortError,
)
from maskpool.losses import sigmoid_binary_cross_entropy, softmax_cross_entropy
from maskpool.network import (
    NetworkConfig,
    NetworkModel,
    format_parameter_table,
    parameter_table,
)
from maskpool.numerics import Rng, grad_check
from maskpool.reference import reference_forward_unpadded


def scene_config(**overrides):
    cfg = dict(input_bins=552, num_classes=15, head="softmax")
    cfg.update(overrides)
    return NetworkConfig(**cfg)


class TestParameterCounts:
    def test_published_table_rows(self):
        rows = parameter_table(scene_config())
        assert [r["params"] for r in rows] == [None, 141_312, 196_608, 196_608,
                                               196_608, None, 3_855]

    def test_conv_dense_total(self):
        model = NetworkModel.build(scene_config(), Rng(0))
        conv_dense = sum(p.data.size for p in model.parameters() if p.decay)
        conv_dense += model.dense.bias.data.size
        assert conv_dense == 141_312 + 3 * 196_608 + (256 * 15 + 15) == 734_991

    def test_tagging_head_uses_class_count(self):
        # 201 bins, 7 tags: 51,456 filterbank weights, 1,799 in the head
        rows = parameter_table(NetworkConfig(input_bins=201, num_classes=7, head="sigmoid"))
        assert rows[1]["params"] == 51_456
        assert rows[-1]["params"] == 1_799

    def test_bn_affine_total(self):
        model = NetworkModel.build(scene_config(), Rng(0))
        bn = sum(p.data.size for p in model.parameters() if not p.decay and "bias" not in p.name)
        assert bn == 4 * 2 * 256

    def test_formatted_table_contains_published_counts(self):
        table = format_parameter_table(scene_config())
        for token in ("141,312", "196,608", "3,855", "734,991"):
            assert token in table
        assert table.count("196,608") == 3


class TestBuild:
    def test_same_seed_bit_identical(self):
        a = NetworkModel.build(scene_config(channels=8), Rng(7))
        b = NetworkModel.build(scene_config(channels=8), Rng(7))
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert np.array_equal(pa.data, pb.data)

    def test_he_init_statistics(self):
        model = NetworkModel.build(scene_config(), Rng(0))
        w = model.filterbank.weight.data
        assert abs(float(w.std()) - np.sqrt(2.0 / 552)) < 0.002
        assert abs(float(w.mean())) < 0.002

    def test_bn_and_bias_initial_values(self):
        model = NetworkModel.build(scene_config(channels=4), Rng(0))
        for bn in model.bns:
            assert np.all(bn.gamma.data == 1.0) and np.all(bn.beta.data == 0.0)
            assert np.all(bn.running_mean == 0.0) and np.all(bn.running_var == 1.0)
        assert np.all(model.dense.bias.data == 0.0)

    def test_min_input_frames(self):
        assert NetworkModel.build(scene_config(), Rng(0)).min_input_frames == 15
        assert tiny_model().min_input_frames == 3


class TestForward:
    def test_full_length_mask_matches_unmasked_pooling(self):
        model = tiny_model(dtype=np.float64)
        x = np.random.default_rng(0).normal(size=(1, 1, 9, 8))
        logits = model.forward(x, np.array([9]), training=False)
        ref = reference_forward_unpadded(model, x[0, 0])
        assert np.allclose(logits[0], ref, atol=1e-9)

    def test_eval_padding_invariance(self):
        model = tiny_model(dtype=np.float64)
        x = np.random.default_rng(1).normal(size=(1, 1, 9, 8))
        base = model.forward(x, np.array([9]), training=False)
        padded = np.concatenate([x, np.zeros((1, 1, 20, 8))], axis=2)
        out = model.forward(padded, np.array([9]), training=False)
        assert np.allclose(out, base, atol=1e-6)

    def test_eval_invariant_to_junk_padding(self):
        # valid-conv plus the strict mask rule: padded content never reaches
        # a counted output frame in eval mode, so even junk is ignored
        model = tiny_model(dtype=np.float64)
        x = np.random.default_rng(2).normal(size=(1, 1, 9, 8))
        base = model.forward(x, np.array([9]), training=False)
        junk = np.concatenate([x, 1e3 * np.ones((1, 1, 12, 8))], axis=2)
        out = model.forward(junk, np.array([9]), training=False)
        assert np.allclose(out, base, atol=1e-6)

    def test_minimum_length_pools_one_frame(self):
        model = NetworkModel.build(scene_config(channels=4, input_bins=8, num_classes=3), Rng(0))
        x = np.random.default_rng(3).normal(size=(1, 1, 15, 8)).astype(np.float32)
        logits = model.forward(x, np.array([15]), training=False)
        assert np.all(np.isfinite(logits))

    def test_too_short_sample_rejected(self):
        model = NetworkModel.build(scene_config(channels=4, input_bins=8, num_classes=3), Rng(0))
        x = np.zeros((2, 1, 20, 8), dtype=np.float32)
        with pytest.raises(TooShortError):
            model.forward(x, np.array([20, 14]), training=False)

    def test_valid_above_padded_height_rejected(self):
        model = tiny_model()
        with pytest.raises(ShapeError):
            model.forward(np.zeros((1, 1, 5, 8)), np.array([9]), training=False)

    def test_eval_forward_is_pure(self):
        model = tiny_model(dtype=np.float64)
        x = np.random.default_rng(4).normal(size=(2, 1, 11, 8))
        valid = np.array([11, 6])
        a = model.forward(x, valid, training=False)
        b = model.forward(x, valid, training=False)
        assert np.array_equal(a, b)

    def test_batch_position_independence_in_eval(self):
        model = tiny_model(dtype=np.float64)
        rng = np.random.default_rng(5)
        long = rng.normal(size=(1, 1, 12, 8))
        short = rng.normal(size=(1, 1, 5, 8))
        alone = model.forward(short, np.array([5]), training=False)
        batch = np.zeros((2, 1, 12, 8))
        batch[0] = long
        batch[1, :, :5] = short
        together = model.forward(batch, np.array([12, 5]), training=False)
        assert np.allclose(together[1], alone[0], atol=1e-9)


class TestEndToEndGradients:
    def test_every_parameter_and_input_softmax(self):
        model = tiny_model(dtype=np.float64, seed=11)
        x = np.random.default_rng(11).normal(size=(2, 1, 9, 8))
        valid = np.array([9, 5])
        labels = np.array([0, 2])

        def loss_value(_=None):
            logits = model.forward(x, valid, training=True)
            return softmax_cross_entropy(logits, labels)[0]

        logits = model.forward(x, valid, training=True)
        _, dlogits = softmax_cross_entropy(logits, labels)
        model.zero_grad()
        dx = model.backward(dlogits)
        for p in model.parameters():
            analytic = p.grad.copy()
            assert grad_check(loss_value, p.data, 1e-5, analytic) < 1e-4, p.name
        assert grad_check(loss_value, x, 1e-5, dx) < 1e-4

    def test_every_parameter_sigmoid_with_masked_bn_stats(self):
        model = tiny_model(dtype=np.float64, seed=12, head="sigmoid",
                           bn_mask_stats=True)
        x = np.random.default_rng(12).normal(size=(2, 1, 7, 8))
        valid = np.array([7, 4])
        targets = np.array([[1, 0, 1], [0, 1, 0]], dtype=np.float64)

        def loss_value(_=None):
            logits = model.forward(x, valid, training=True)
            return sigmoid_binary_cross_entropy(logits, targets)[0]

        logits = model.forward(x, valid, training=True)
        _, dlogits = sigmoid_binary_cross_entropy(logits, targets)
        model.zero_grad()
        dx = model.backward(dlogits)
        for p in model.parameters():
            analytic = p.grad.copy()
            assert grad_check(loss_value, p.data, 1e-5, analytic) < 1e-4, p.name
        assert grad_check(loss_value, x, 1e-5, dx) < 1e-4


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        model = tiny_model(dtype=np.float32, seed=3)
        x = np.random.default_rng(6).normal(size=(1, 1, 9, 8)).astype(np.float32)
        model.forward(x, np.array([9]), training=True)  # move the running stats
        before = model.forward(x, np.array([9]), training=False)
        path = tmp_path / "model.mpnw"
        model.save(path)
        loaded = NetworkModel.load(path)
        for name, arr in model.state_arrays().items():
            assert np.array_equal(loaded.state_arrays()[name], arr), name
        after = loaded.forward(x, np.array([9]), training=False)
        assert np.array_equal(before, after)

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.mpnw"
        path.write_bytes(b"WHAT" + b"\x00" * 64)
        with pytest.raises(CheckpointError):
            NetworkModel.load(path)

    def test_truncation_rejected(self, tmp_path):
        model = tiny_model(dtype=np.float32)
        path = tmp_path / "trunc.mpnw"
        model.save(path)
        path.write_bytes(path.read_bytes()[:-20])
        with pytest.raises(CheckpointError):
            NetworkModel.load(path)

    def test_config_mismatch_detected(self, tmp_path):
        model = NetworkModel.build(
            NetworkConfig(input_bins=201, num_classes=7, head="sigmoid", channels=4), Rng(0))
        path = tmp_path / "t.mpnw"
        model.save(path)
        loaded = NetworkModel.load(path)
        with pytest.raises(ConfigMismatchError):
            loaded.check_compatible(552, 15)

    def test_config_embedded_in_header(self, tmp_path):
        model = tiny_model(dtype=np.float32)
        path = tmp_path / "cfg.mpnw"
        model.save(path)
        loaded = NetworkModel.load(path)
        assert loaded.config == model.config
