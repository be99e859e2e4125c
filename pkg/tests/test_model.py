import numpy as np
import pytest

from oracles import central_difference_grad, max_relative_error
from smokewatch.errors import ShapeError, WeightsFormatError
from smokewatch.model import (
    ModelConfig,
    TrainConfig,
    build,
    class_labels,
    expected_parameter_count,
    fit,
    forward,
    forward_logits,
    forward_trace,
    layer_output_shapes,
    load_weights,
    loss_and_gradients,
    save_weights,
)
from smokewatch.tensor import softmax_cross_entropy


def random_input(config, seed=0):
    rng = np.random.default_rng(seed)
    return rng.random((3, config.input_size, config.input_size), dtype=np.float32)


class TestModelConfig:
    def test_default_geometry(self):
        cfg = ModelConfig()
        assert cfg.input_size == 640
        assert cfg.backbone_channels == (64, 128, 256, 512, 1024)
        assert cfg.neck_channels == (1024, 1024)
        assert cfg.hidden_dim == 128 and cfg.num_classes == 2
        assert cfg.feature_size == 20
        assert cfg.flatten_length == 409_600

    def test_rejects_bad_input_size(self):
        for bad in (0, -32, 33, 48):
            with pytest.raises(ValueError):
                ModelConfig(input_size=bad)

    def test_rejects_wrong_channel_counts(self):
        with pytest.raises(ValueError):
            ModelConfig(backbone_channels=(64, 128, 256, 512))
        with pytest.raises(ValueError):
            ModelConfig(neck_channels=(1024,))

    def test_rejects_even_kernel_and_wrong_strides(self):
        with pytest.raises(ValueError):
            ModelConfig(kernel=4)
        with pytest.raises(ValueError):
            ModelConfig(stride_backbone=1)
        with pytest.raises(ValueError):
            ModelConfig(stride_neck=2)

    def test_rejects_nonpositive_widths(self):
        with pytest.raises(ValueError):
            ModelConfig(hidden_dim=0)
        with pytest.raises(ValueError):
            ModelConfig(num_classes=1)


def test_layer_output_shapes_default():
    shapes = layer_output_shapes(ModelConfig())
    assert shapes == [
        (64, 320, 320),
        (128, 160, 160),
        (256, 80, 80),
        (512, 40, 40),
        (1024, 20, 20),
        (1024, 20, 20),
        (1024, 20, 20),
    ]


def test_layer_output_shapes_reduced(reduced_config):
    shapes = layer_output_shapes(reduced_config)
    assert shapes[-1] == (128, 2, 2)
    assert reduced_config.flatten_length == 512


def test_class_labels():
    assert class_labels(2) == ["smoking", "not_smoking"]
    assert class_labels(3) == ["class_0", "class_1", "class_2"]


class TestBuild:
    def test_parameter_shapes_and_count(self, tiny_config):
        model = build(tiny_config, seed=0)
        assert len(model.convs) == 7
        assert len(model.backbone) == 5 and len(model.neck) == 2
        assert model.convs[0].weights.shape == (4, 3, 3, 3)
        assert model.convs[4].stride == 2 and model.convs[5].stride == 1
        assert model.fc1.weights.shape == (16, tiny_config.flatten_length)
        assert model.fc2.weights.shape == (2, 16)
        # hand-computed from the layer dimensions above
        assert model.parameter_count() == 99_642
        assert expected_parameter_count(tiny_config) == 99_642

    def test_biases_start_at_zero(self, tiny_config):
        model = build(tiny_config, seed=3)
        for conv in model.convs:
            assert not conv.bias.any()
        assert not model.fc1.bias.any() and not model.fc2.bias.any()

    def test_he_init_scale(self, tiny_config):
        model = build(tiny_config, seed=0)
        conv = model.convs[3]
        fan_in = conv.in_channels * conv.kernel ** 2
        std = float(conv.weights.std())
        assert abs(std - np.sqrt(2.0 / fan_in)) < 0.15 * np.sqrt(2.0 / fan_in)

    def test_seed_determinism(self, tiny_config):
        a = build(tiny_config, seed=5)
        b = build(tiny_config, seed=5)
        c = build(tiny_config, seed=6)
        for ta, tb in zip(a.parameter_tensors(), b.parameter_tensors()):
            np.testing.assert_array_equal(ta, tb)
        assert any(not np.array_equal(ta, tc)
                   for ta, tc in zip(a.parameter_tensors(), c.parameter_tensors()))


class TestForward:
    def test_probabilities_form_distribution(self, tiny_config):
        model = build(tiny_config, seed=0)
        scores = forward(model, random_input(tiny_config))
        assert scores.probabilities.shape == (2,)
        assert abs(float(scores.probabilities.sum()) - 1.0) < 1e-6
        assert scores.predicted_class in (0, 1)
        assert scores.label in ("smoking", "not_smoking")
        assert 0.0 <= scores.confidence <= 1.0

    def test_deterministic(self, tiny_config):
        model = build(tiny_config, seed=0)
        x = random_input(tiny_config)
        np.testing.assert_array_equal(forward(model, x).probabilities,
                                      forward(model, x).probabilities)

    def test_rejects_wrong_input_shape(self, tiny_config):
        model = build(tiny_config, seed=0)
        with pytest.raises(ShapeError):
            forward(model, np.zeros((3, 64, 64), dtype=np.float32))
        with pytest.raises(ShapeError):
            forward(model, np.zeros((1, 32, 32), dtype=np.float32))

    def test_trace_matches_plain_forward(self, tiny_config):
        model = build(tiny_config, seed=0)
        x = random_input(tiny_config)
        trace = forward_trace(model, x)
        np.testing.assert_array_equal(trace.logits, forward_logits(model, x))
        assert trace.conv_output_shapes == layer_output_shapes(tiny_config)
        assert trace.flat.shape == (tiny_config.flatten_length,)


class TestGradients:
    def test_shapes_match_parameters(self, tiny_config):
        model = build(tiny_config, seed=0)
        loss, grads = loss_and_gradients(model, random_input(tiny_config), 1)
        assert loss > 0.0
        assert len(grads.conv) == 7
        for conv, (gw, gb) in zip(model.convs, grads.conv):
            assert gw.shape == conv.weights.shape and gb.shape == conv.bias.shape
        assert grads.fc1[0].shape == model.fc1.weights.shape
        assert grads.fc2[1].shape == model.fc2.bias.shape

    def test_rejects_bad_label(self, tiny_config):
        model = build(tiny_config, seed=0)
        with pytest.raises(ValueError):
            loss_and_gradients(model, random_input(tiny_config), 2)

    def test_spot_check_against_finite_differences(self, tiny_config):
        model = build(tiny_config, seed=2)
        x = random_input(tiny_config, seed=4)
        _, grads = loss_and_gradients(model, x, 0)

        def loss_wrt_fc2_bias(b):
            model.fc2.bias[...] = b
            return softmax_cross_entropy(forward_logits(model, x), 0)

        analytic = grads.fc2[1]
        numeric = central_difference_grad(loss_wrt_fc2_bias, model.fc2.bias.copy())
        assert max_relative_error(analytic, numeric) < 1e-2


class TestFit:
    def test_single_sample_loss_decreases(self, tiny_config):
        model = build(tiny_config, seed=0)
        sample = [(random_input(tiny_config, seed=1), 0)]
        stats = fit(model, sample, TrainConfig(epochs=5, learning_rate=0.01, seed=0))
        losses = [s.loss for s in stats]
        assert len(losses) == 5
        assert all(b < a for a, b in zip(losses, losses[1:]))
        assert stats[-1].accuracy == 1.0

    def test_deterministic_under_seed(self, tiny_config):
        data = [(random_input(tiny_config, seed=s), s % 2) for s in range(4)]
        runs = []
        for _ in range(2):
            model = build(tiny_config, seed=7)
            stats = fit(model, data, TrainConfig(epochs=3, learning_rate=0.005, seed=11))
            runs.append(([(s.loss, s.accuracy) for s in stats], model.parameter_tensors()))
        assert runs[0][0] == runs[1][0]
        for ta, tb in zip(runs[0][1], runs[1][1]):
            np.testing.assert_array_equal(ta, tb)

    def test_zero_learning_rate_changes_nothing(self, tiny_config):
        model = build(tiny_config, seed=0)
        before = [t.copy() for t in model.parameter_tensors()]
        fit(model, [(random_input(tiny_config), 1)],
            TrainConfig(epochs=2, learning_rate=0.0, seed=0))
        for t, b in zip(model.parameter_tensors(), before):
            np.testing.assert_array_equal(t, b)

    def test_rejects_bad_inputs(self, tiny_config):
        model = build(tiny_config, seed=0)
        with pytest.raises(ValueError):
            fit(model, [], TrainConfig(epochs=1))
        with pytest.raises(ValueError):
            fit(model, [(random_input(tiny_config), 9)], TrainConfig(epochs=1))
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(epochs=1, learning_rate=-0.1)
        with pytest.raises(ValueError):
            TrainConfig(epochs=1, loss="hinge")


class TestPersistence:
    def test_round_trip_is_bit_exact(self, tiny_config, tmp_path):
        model = build(tiny_config, seed=9)
        path = tmp_path / "weights.bin"
        save_weights(model, path)
        loaded = load_weights(path)
        assert loaded.config == tiny_config
        for ta, tb in zip(model.parameter_tensors(), loaded.parameter_tensors()):
            assert ta.dtype == tb.dtype == np.float32
            assert ta.tobytes() == tb.tobytes()

    def test_load_with_matching_config(self, tiny_config, tmp_path):
        model = build(tiny_config, seed=9)
        path = tmp_path / "weights.bin"
        save_weights(model, path)
        loaded = load_weights(path, tiny_config)
        np.testing.assert_array_equal(loaded.fc2.weights, model.fc2.weights)

    def test_load_rejects_config_mismatch(self, tiny_config, reduced_config, tmp_path):
        path = tmp_path / "weights.bin"
        save_weights(build(tiny_config, seed=0), path)
        with pytest.raises(WeightsFormatError):
            load_weights(path, reduced_config)

    def test_load_rejects_bad_magic(self, tiny_config, tmp_path):
        path = tmp_path / "weights.bin"
        save_weights(build(tiny_config, seed=0), path)
        raw = bytearray(path.read_bytes())
        raw[0] = ord("X")
        path.write_bytes(bytes(raw))
        with pytest.raises(WeightsFormatError):
            load_weights(path)

    def test_load_rejects_truncation_with_offset(self, tiny_config, tmp_path):
        path = tmp_path / "weights.bin"
        save_weights(build(tiny_config, seed=0), path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(WeightsFormatError) as err:
            load_weights(path)
        assert "offset" in str(err.value)

    def test_load_rejects_trailing_bytes(self, tiny_config, tmp_path):
        path = tmp_path / "weights.bin"
        save_weights(build(tiny_config, seed=0), path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(WeightsFormatError):
            load_weights(path)

    def test_loaded_model_predicts_identically(self, tiny_config, tmp_path):
        model = build(tiny_config, seed=4)
        path = tmp_path / "weights.bin"
        save_weights(model, path)
        loaded = load_weights(path)
        x = random_input(tiny_config, seed=2)
        np.testing.assert_array_equal(forward(model, x).probabilities,
                                      forward(loaded, x).probabilities)
