"""
Tests for the neural network engine
"""

import math

import numpy as np
import pytest

from src.errors import FormatError, NonFiniteError, ValidationError
from src.neuralnet import (
    AdamState,
    Architecture,
    Features,
    PlateauState,
    adam_step,
    argmax_decode,
    backpropagate,
    backward,
    build_rdfc_ae,
    cce_loss,
    corner_codebook,
    encode_features,
    forward,
    int_to_bits,
    load_params,
    one_hot,
    plateau_update,
    predict,
    save_params,
    vq_quantize,
    vq_quantize_batch,
)
from src.neuralnet.layers import softmax


def tiny_batch(params, size=4, seed=0):
    rng = np.random.default_rng(seed)
    arch = params.arch
    x = rng.integers(0, arch.x_dim, size=size)
    k = rng.integers(0, 1 << arch.nr0, size=size)
    l = rng.integers(0, 1 << arch.nrl, size=size)
    y = rng.integers(0, arch.x_dim, size=size)
    features = encode_features(arch, x, k, l, dtype=params.dtype)
    return features, one_hot(y, arch.x_dim, dtype=params.dtype)


def loss_at(params, features, targets) -> float:
    y_hat, _ = forward(params, features, bypass_vq=True)
    return cce_loss(targets, y_hat)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


class TestArchitecture:
    """Test cases for Architecture and build_rdfc_ae."""

    def test_full_size_widths(self):
        """Test widths for n=8, nR0=16, nRL=16."""
        arch = Architecture(8, 16, 16)

        assert arch.encoder_width == 1088
        assert arch.decoder_width == 1728
        assert arch.nr == 7
        assert arch.layer_specs()[-1] == (1728, 256, "softmax")
        assert corner_codebook(arch.nr).shape == (128, 7)

    def test_no_common_randomness(self):
        """Test that nR0=0 removes the k input."""
        arch = Architecture(8, 0, 12)
        specs = arch.layer_specs()

        assert arch.encoder_width == 1024
        assert specs[0] == (256, 1024, "relu")
        assert specs[4][0] == 7 + 12

    def test_layer_count(self):
        """Test 3 + 1 encoder layers and 5 + 1 decoder layers."""
        activations = [s[2] for s in Architecture(3, 2, 2).layer_specs()]
        assert activations == ["relu"] * 3 + ["sigmoid"] + ["relu"] * 5 + ["softmax"]

    def test_configurable_depth(self):
        """Test one encoder and two decoder hidden layers."""
        arch = Architecture(3, 2, 2, encoder_depth=1, decoder_depth=2)

        assert [s[2] for s in arch.layer_specs()] == ["relu", "sigmoid", "relu", "relu", "softmax"]
        assert arch.encoder_layers == 2
        assert arch.layer_specs()[2] == (2 + 2 + 2, arch.decoder_width, "relu")

    @pytest.mark.parametrize("depths", [dict(encoder_depth=0), dict(decoder_depth=0), dict(decoder_depth=33)])
    def test_depth_out_of_range(self, depths):
        """Test that hidden-layer counts outside [1, 32] are rejected."""
        with pytest.raises(ValidationError):
            Architecture(3, 2, 2, **depths)

    def test_same_seed_same_weights(self):
        """Test that the init stream is deterministic."""
        a = build_rdfc_ae(2, 1, 1, seed=3)
        b = build_rdfc_ae(2, 1, 1, seed=3)
        c = build_rdfc_ae(2, 1, 1, seed=4)

        assert all(np.array_equal(p, q) for p, q in zip(a.trainable(), b.trainable()))
        assert not np.array_equal(a.weights[0], c.weights[0])
        assert all(np.all(bias == 0) for bias in a.biases)

    def test_glorot_limit(self):
        """Test that initial weights respect sqrt(6 / (fan_in + fan_out))."""
        params = build_rdfc_ae(3, 2, 2, seed=0)
        for w in params.weights:
            assert np.abs(w).max() <= math.sqrt(6.0 / sum(w.shape))

    def test_blocklength_too_small(self):
        """Test that n=1 cannot be built."""
        with pytest.raises(ValidationError):
            build_rdfc_ae(1, 0, 0, seed=0)


class TestVectorQuantizer:
    """Test cases for the vector quantizer."""

    def test_codebook_point_is_fixed(self):
        """Test that a codebook point maps to itself."""
        codebook = corner_codebook(3)
        point, index = vq_quantize(codebook[5], codebook)

        np.testing.assert_array_equal(point, codebook[5])
        assert index == 5

    def test_nearest_corner(self):
        """Test (0.9, 0.1) quantizes to (1, 0)."""
        point, index = vq_quantize(np.array([0.9, 0.1]), corner_codebook(2))

        np.testing.assert_array_equal(point, [1.0, 0.0])
        assert index == 2

    def test_tie_goes_to_lowest_index(self):
        """Test the centre of the square quantizes to index 0."""
        point, index = vq_quantize(np.array([0.5, 0.5]), corner_codebook(2))
        assert index == 0

    def test_matches_thresholding(self):
        """Test argmin over 128 corners equals rounding each coordinate."""
        rng = np.random.default_rng(1)
        latent = rng.random((500, 7))
        points, idx = vq_quantize_batch(latent, corner_codebook(7))
        expected = (latent > 0.5).astype(np.float64)

        np.testing.assert_array_equal(points, expected)
        np.testing.assert_array_equal(idx, expected @ (1 << np.arange(6, -1, -1)))

    def test_idempotent(self):
        """Test that quantizing a quantized point changes nothing."""
        latent = np.random.default_rng(2).random((50, 4))
        once, _ = vq_quantize_batch(latent, corner_codebook(4))
        twice, _ = vq_quantize_batch(once, corner_codebook(4))
        np.testing.assert_array_equal(once, twice)

    def test_dimension_mismatch(self):
        """Test that the latent width must match the codebook."""
        with pytest.raises(ValidationError):
            vq_quantize_batch(np.zeros((2, 3)), corner_codebook(2))


class TestForward:
    """Test cases for forward, softmax and the CCE loss."""

    def test_rows_are_stochastic(self):
        """Test that every output row sums to one."""
        params = build_rdfc_ae(3, 2, 3, seed=0)
        features, _ = tiny_batch(params, size=32)
        y_hat, cache = forward(params, features)

        np.testing.assert_allclose(y_hat.sum(axis=1), 1.0, atol=1e-9)
        assert len(cache.outputs) == 10

    def test_without_common_randomness(self):
        """Test the nR0=0 path."""
        params = build_rdfc_ae(2, 0, 2, seed=0)
        features = encode_features(params.arch, [0, 1, 2], [0, 0, 0], [3, 2, 1])
        y_hat, _ = forward(params, features)

        assert features.k.shape == (3, 0)
        assert y_hat.shape == (3, 4)

    def test_deterministic(self):
        """Test that fixed params and inputs give identical outputs."""
        params = build_rdfc_ae(2, 1, 1, seed=5)
        features, _ = tiny_batch(params)
        np.testing.assert_array_equal(forward(params, features)[0], forward(params, features)[0])

    def test_quantizer_output_is_codebook_point(self):
        """Test that the decoder sees a corner of the hypercube."""
        params = build_rdfc_ae(3, 1, 1, seed=0)
        features, _ = tiny_batch(params, size=16)
        _, cache = forward(params, features)

        assert set(np.unique(cache.j)) <= {0.0, 1.0}
        np.testing.assert_array_equal(cache.j, params.codebook[cache.vq_index])

    def test_feature_width_mismatch(self):
        """Test that features for another architecture are rejected."""
        params = build_rdfc_ae(2, 1, 1, seed=0)
        other = encode_features(Architecture(2, 2, 1), [0], [0], [0])
        with pytest.raises(ValidationError):
            forward(params, other)

    def test_nan_in_decoder_input(self):
        """Test that a NaN in the l bits is caught at the decoder input."""
        params = build_rdfc_ae(2, 1, 2, seed=0)
        features, _ = tiny_batch(params)
        l = features.l.copy()
        l[1, 0] = np.nan
        with pytest.raises(NonFiniteError, match="decoder input"):
            forward(params, Features(x=features.x, k=features.k, l=l))

    def test_inf_in_encoder_input(self):
        """Test that an infinite k bit is caught at the encoder input."""
        params = build_rdfc_ae(2, 1, 2, seed=0)
        features, _ = tiny_batch(params)
        k = features.k.copy()
        k[0, 0] = np.inf
        with pytest.raises(NonFiniteError, match="encoder input"):
            forward(params, Features(x=features.x, k=k, l=features.l))

    def test_shallow_network(self):
        """Test the forward pass of a network with one hidden layer on each side."""
        params = build_rdfc_ae(3, 2, 3, seed=0, encoder_depth=1, decoder_depth=1)
        features, _ = tiny_batch(params, size=16)
        y_hat, cache = forward(params, features)

        np.testing.assert_allclose(y_hat.sum(axis=1), 1.0, atol=1e-9)
        assert len(cache.outputs) == 4
        np.testing.assert_array_equal(cache.j, params.codebook[cache.vq_index])

    def test_softmax_extreme_inputs(self):
        """Test softmax stays stochastic for huge pre-activations."""
        out = softmax(np.array([[1000.0, -1000.0, 0.0], [1e-300, 0.0, -5.0]]))
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)

    def test_bits_msb_first(self):
        """Test the binary feature encoding."""
        np.testing.assert_array_equal(int_to_bits(np.array([6]), 4), [[0, 1, 1, 0]])

    def test_cce_perfect_prediction(self):
        """Test CCE of a one-hot prediction is zero."""
        y = one_hot(np.array([0, 3]), 4)
        assert cce_loss(y, y) <= 1e-9

    @pytest.mark.parametrize("classes,expected", [(256, 5.5452), (2, 0.6931)])
    def test_cce_uniform(self, classes, expected):
        """Test CCE of a uniform prediction is ln(classes)."""
        y = one_hot(np.array([0, classes - 1]), classes)
        y_hat = np.full((2, classes), 1.0 / classes)
        assert cce_loss(y, y_hat) == pytest.approx(expected, abs=1e-4)

    def test_cce_shape_mismatch(self):
        """Test that target and prediction shapes must agree."""
        with pytest.raises(ValidationError):
            cce_loss(np.zeros((2, 4)), np.full((2, 2), 0.5))


class TestBackward:
    """Test cases for backpropagation."""

    def test_matches_finite_differences(self):
        """Test analytic gradients against central differences at 64-bit precision."""
        params = build_rdfc_ae(2, 1, 1, seed=11)
        features, targets = tiny_batch(params, size=4, seed=11)
        _, cache = forward(params, features, bypass_vq=True)
        analytic = backward(params, cache, targets).as_list()

        rng = np.random.default_rng(12)
        h = 1e-6
        base = loss_at(params, features, targets)
        got, want = [], []
        for array, grad in zip(params.trainable(), analytic):
            flat = array.reshape(-1)
            for i in rng.choice(flat.size, size=min(flat.size, 25), replace=False):
                saved = flat[i]
                flat[i] = saved + h
                up = loss_at(params, features, targets)
                flat[i] = saved - h
                down = loss_at(params, features, targets)
                flat[i] = saved
                # a ReLU kink inside [-h, h] shows up as curvature
                if abs(up - 2 * base + down) > 1e-11:
                    continue
                got.append(grad.reshape(-1)[i])
                want.append((up - down) / (2 * h))

        assert len(got) >= 100
        assert relative_error(np.array(got), np.array(want)) <= 1e-4

    def test_float32_path(self):
        """Test 32-bit gradients agree with 64-bit gradients at 1e-2."""
        params = build_rdfc_ae(2, 1, 1, seed=13)
        fast = params.copy(np.float32)
        features, targets = tiny_batch(params, size=8, seed=13)
        features32, targets32 = tiny_batch(fast, size=8, seed=13)

        _, cache = forward(params, features, bypass_vq=True)
        _, cache32 = forward(fast, features32, bypass_vq=True)
        reference = np.concatenate([g.ravel() for g in backward(params, cache, targets).as_list()])
        approx = np.concatenate([g.ravel() for g in backward(fast, cache32, targets32).as_list()])

        assert fast.dtype == np.float32
        assert relative_error(approx.astype(np.float64), reference) <= 1e-2

    def test_straight_through(self):
        """Test that the encoder output receives the quantizer output gradient unchanged."""
        params = build_rdfc_ae(3, 1, 2, seed=2)
        features, targets = tiny_batch(params, size=8)
        _, cache = forward(params, features)
        grads = backward(params, cache, targets)

        np.testing.assert_array_equal(grads.d_j_tilde, grads.d_vq_output)
        assert len(grads.weights) == len(params.weights)

    def test_deep_network_gradient_shapes(self):
        """Test gradients for a network with two encoder and seven decoder hidden layers."""
        params = build_rdfc_ae(2, 1, 1, seed=4, encoder_depth=2, decoder_depth=7)
        features, targets = tiny_batch(params, size=8)
        _, cache = forward(params, features)
        grads = backward(params, cache, targets)

        assert [g.shape for g in grads.weights] == [w.shape for w in params.weights]
        np.testing.assert_array_equal(grads.d_j_tilde, grads.d_vq_output)
        assert grads.d_j_tilde.shape == (8, params.arch.nr)

    def test_commitment_term(self):
        """Test that the commitment term adds 2 beta (j_tilde - j) / B."""
        params = build_rdfc_ae(3, 1, 2, seed=2)
        features, targets = tiny_batch(params, size=8)
        _, cache = forward(params, features)
        grads = backward(params, cache, targets, commitment_beta=0.25)

        expected = grads.d_vq_output + 0.5 * (cache.j_tilde - cache.j) / 8
        np.testing.assert_allclose(grads.d_j_tilde, expected, atol=1e-15)

    def test_zero_gradient(self):
        """Test that a zero output gradient gives zero parameter gradients."""
        params = build_rdfc_ae(2, 1, 1, seed=0)
        features, _ = tiny_batch(params)
        _, cache = forward(params, features)
        grads = backpropagate(params, cache, np.zeros((4, 4)))

        assert all(np.all(g == 0) for g in grads.as_list())

    def test_shape_mismatch(self):
        """Test that targets must match the cached output."""
        params = build_rdfc_ae(2, 1, 1, seed=0)
        features, _ = tiny_batch(params)
        _, cache = forward(params, features)
        with pytest.raises(ValidationError):
            backward(params, cache, np.zeros((3, 4)))


class TestAdam:
    """Test cases for adam_step."""

    def test_first_step(self):
        """Test a scalar with g=1 moves by about -lr."""
        theta = np.array([0.0])
        state = adam_step([theta], [np.array([1.0])], AdamState(lr=1e-4))

        assert state.step == 1
        assert theta[0] == pytest.approx(-1e-4, abs=1e-10)

    def test_two_steps(self):
        """Test two steps with constant g=1 move by about -2 lr."""
        theta = np.array([0.0])
        state = AdamState.for_params([theta], lr=1e-4)
        for _ in range(2):
            adam_step([theta], [np.array([1.0])], state)
        assert theta[0] == pytest.approx(-2e-4, abs=1e-8)

    def test_zero_gradient(self):
        """Test g=0 with zero moments leaves theta unchanged."""
        theta = np.array([0.5, -0.5])
        adam_step([theta], [np.zeros(2)], AdamState())
        np.testing.assert_array_equal(theta, [0.5, -0.5])

    def test_shape_mismatch(self):
        """Test that gradient shapes must match."""
        with pytest.raises(ValidationError):
            adam_step([np.zeros(2)], [np.zeros(3)], AdamState())


class TestPlateau:
    """Test cases for plateau_update."""

    def run(self, losses, lr=1.0):
        state = PlateauState(lr=lr)
        return [plateau_update(state, loss) for loss in losses]

    def test_steady_improvement(self):
        """Test 1.0, 0.95, 0.90 keeps the learning rate."""
        assert self.run([1.0, 0.95, 0.90]) == [1.0, 1.0, 1.0]

    def test_reduction_after_second_flat_epoch(self):
        """Test 1.0, 0.995, 0.999 reduces after the third loss."""
        assert self.run([1.0, 0.995, 0.999]) == pytest.approx([1.0, 1.0, 0.1])

    def test_exact_min_delta_is_not_improvement(self):
        """Test that an improvement of exactly min_delta does not count."""
        state = PlateauState(lr=1.0, best=1.0)
        plateau_update(state, 0.99)

        assert state.best == 1.0
        assert state.wait == 1

    def test_never_increases(self):
        """Test that the learning rate is non-increasing on random traces."""
        rng = np.random.default_rng(0)
        lrs = self.run(list(1.0 + rng.random(50)))
        assert all(b <= a for a, b in zip(lrs, lrs[1:]))

    def test_floor(self):
        """Test that min_lr bounds the reduction."""
        state = PlateauState(lr=1e-3, min_lr=5e-4)
        for loss in [1.0, 1.0, 1.0, 1.0, 1.0]:
            plateau_update(state, loss)
        assert state.lr == 5e-4

    def test_non_finite_loss(self):
        """Test that NaN losses are rejected."""
        with pytest.raises(ValidationError):
            plateau_update(PlateauState(lr=1.0), float("nan"))


class TestDecoding:
    """Test cases for argmax_decode and predict."""

    @pytest.mark.parametrize("row,expected", [
        ([0.0, 0.0, 1.0, 0.0], 2),
        ([0.5, 0.5], 0),
        ([0.1, 0.7, 0.2], 1),
    ])
    def test_argmax(self, row, expected):
        """Test hard decisions and the tie rule."""
        assert argmax_decode(np.array(row)) == expected

    def test_predict_batches(self):
        """Test that batching does not change predictions."""
        params = build_rdfc_ae(2, 1, 2, seed=1)
        rng = np.random.default_rng(1)
        x, k, l = rng.integers(0, 4, 100), rng.integers(0, 2, 100), rng.integers(0, 4, 100)

        small = predict(params, x, k, l, batch_size=7)
        np.testing.assert_array_equal(small, predict(params, x, k, l))
        assert small.min() >= 0 and small.max() < 4


class TestModelFile:
    """Test cases for the model file format."""

    def test_save_and_load(self, tmp_path):
        """Test that saved parameters load back bit-identically."""
        params = build_rdfc_ae(3, 2, 1, seed=9, encoder_activation="relu")
        path = save_params(params, tmp_path / "model.rdfm")
        loaded = load_params(path)

        assert path.read_bytes()[:4] == b"RDFM"
        assert loaded.arch == params.arch
        assert all(np.array_equal(p, q) for p, q in zip(loaded.trainable(), params.trainable()))

    def test_depths_saved(self, tmp_path):
        """Test that non-default hidden-layer counts survive a save and load."""
        params = build_rdfc_ae(3, 2, 1, seed=9, encoder_depth=2, decoder_depth=4)
        loaded = load_params(save_params(params, tmp_path / "model.rdfm"))

        assert (loaded.arch.encoder_depth, loaded.arch.decoder_depth) == (2, 4)
        assert len(loaded.weights) == 2 + 1 + 4 + 1

    def test_float32_saved_as_float64(self, tmp_path):
        """Test that a 32-bit network loads back as 64-bit."""
        params = build_rdfc_ae(2, 1, 1, seed=0, dtype=np.float32)
        loaded = load_params(save_params(params, tmp_path / "model.rdfm"))
        assert loaded.dtype == np.float64

    def test_bad_magic(self, tmp_path):
        """Test that a foreign file is rejected."""
        path = save_params(build_rdfc_ae(2, 1, 1, seed=0), tmp_path / "model.rdfm")
        path.write_bytes(b"ABCD" + path.read_bytes()[4:])
        with pytest.raises(FormatError):
            load_params(path)

    def test_truncated(self, tmp_path):
        """Test that missing parameters are reported."""
        path = save_params(build_rdfc_ae(2, 1, 1, seed=0), tmp_path / "model.rdfm")
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(FormatError):
            load_params(path)

    def test_trailing_bytes(self, tmp_path):
        """Test that extra bytes after the parameters are reported."""
        path = save_params(build_rdfc_ae(2, 1, 1, seed=0), tmp_path / "model.rdfm")
        path.write_bytes(path.read_bytes() + b"\x00" * 8)
        with pytest.raises(FormatError):
            load_params(path)


if __name__ == "__main__":
    pytest.main([__file__])
