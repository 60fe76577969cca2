import numpy as np
import pytest

from gradcheck import assert_grad_close, finite_difference_grad
from holopr.decoder import (
    DecoderConfig,
    DecoderParams,
    LatentInput,
    conv1x1_forward,
    decoder_backward,
    decoder_forward,
    init_decoder,
    load_decoder,
    save_decoder,
    upsample2_adjoint,
    upsample2_forward,
)


class TestConfig:
    def test_output_shape_law(self):
        cfg = DecoderConfig(depth=2, channels=(3, 4, 5), latent_shape=(4, 4))
        assert cfg.output_shape == (16, 16)

    def test_for_output_infers_latent(self):
        cfg = DecoderConfig.for_output((32, 32), depth=3, channels=8)
        assert cfg.latent_shape == (4, 4)
        assert cfg.channels == (8, 8, 8, 8)

    def test_for_output_rejects_indivisible(self):
        with pytest.raises(ValueError, match="divisible"):
            DecoderConfig.for_output((12, 12), depth=3, channels=4)

    def test_rejects_wrong_channel_count(self):
        with pytest.raises(ValueError):
            DecoderConfig(depth=2, channels=(3, 4), latent_shape=(2, 2))


class TestInit:
    def test_deterministic_for_fixed_seed(self):
        cfg = DecoderConfig(depth=2, channels=(3, 4, 5), latent_shape=(2, 2))
        p1, z1 = init_decoder(cfg, seed=11)
        p2, z2 = init_decoder(cfg, seed=11)
        assert np.array_equal(z1.z, z2.z)
        for a, b in zip(p1.as_list(), p2.as_list()):
            assert np.array_equal(a, b)

    def test_latent_range(self):
        cfg = DecoderConfig(depth=1, channels=(16, 16), latent_shape=(8, 8))
        _, latent = init_decoder(cfg, seed=0)
        assert latent.z.min() >= 0.0 and latent.z.max() <= 0.1

    def test_kernel_bound_follows_fan_in(self):
        cfg = DecoderConfig(depth=1, channels=(4, 64), latent_shape=(4, 4))
        params, _ = init_decoder(cfg, seed=2)
        assert np.abs(params.kernels[0]).max() <= 0.5  # 1/sqrt(4)
        assert np.abs(params.head).max() <= 1.0 / 8.0  # 1/sqrt(64)

    def test_latent_is_immutable(self):
        cfg = DecoderConfig(depth=1, channels=(2, 2), latent_shape=(2, 2))
        _, latent = init_decoder(cfg, seed=0)
        with pytest.raises(ValueError):
            latent.z[0, 0, 0] = 1.0


class TestConv1x1:
    def test_identity_kernel(self):
        x = np.random.default_rng(0).random((3, 2, 2))
        np.testing.assert_array_equal(conv1x1_forward(x, np.eye(3)), x)

    def test_zero_kernel(self):
        x = np.random.default_rng(1).random((2, 3, 3))
        np.testing.assert_array_equal(conv1x1_forward(x, np.zeros((4, 2))), 0.0)

    def test_matches_per_pixel_matvec_oracle(self):
        rng = np.random.default_rng(2)
        x = rng.random((3, 2, 2))
        k = rng.random((2, 3))
        out = conv1x1_forward(x, k)
        for h in range(2):
            for w in range(2):
                np.testing.assert_allclose(out[:, h, w], k @ x[:, h, w], atol=1e-14)

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            conv1x1_forward(np.zeros((3, 2, 2)), np.zeros((4, 2)))


class TestUpsample:
    def test_constant_channel(self):
        x = np.full((2, 3, 4), 0.7)
        np.testing.assert_allclose(upsample2_forward(x), 0.7)

    def test_single_pixel_spreads_value(self):
        np.testing.assert_array_equal(
            upsample2_forward(np.array([[[3.0]]])), np.full((1, 2, 2), 3.0)
        )

    def test_two_pixel_weights(self):
        out = upsample2_forward(np.array([[[0.0, 1.0]]]))
        np.testing.assert_allclose(out[0, 0], [0.0, 0.25, 0.75, 1.0])

    def test_adjoint_identity(self):
        rng = np.random.default_rng(5)
        x = rng.random((3, 4, 5))
        u = rng.random((3, 8, 10))
        lhs = np.sum(u * upsample2_forward(x))
        rhs = np.sum(upsample2_adjoint(u) * x)
        assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_adjoint_zero(self):
        np.testing.assert_array_equal(upsample2_adjoint(np.zeros((2, 4, 4))), 0.0)

    def test_adjoint_matrix_is_exact_transpose(self):
        # build both operators as dense matrices on a 2x2 single-channel input
        fwd = np.zeros((16, 4))
        adj = np.zeros((4, 16))
        for j in range(4):
            e = np.zeros((1, 2, 2))
            e.flat[j] = 1.0
            fwd[:, j] = upsample2_forward(e).ravel()
        for j in range(16):
            e = np.zeros((1, 4, 4))
            e.flat[j] = 1.0
            adj[:, j] = upsample2_adjoint(e).ravel()
        np.testing.assert_array_equal(adj, fwd.T)


class TestForward:
    def test_all_zero_parameters_give_half(self):
        cfg = DecoderConfig(depth=2, channels=(2, 3, 4), latent_shape=(2, 2))
        params, latent = init_decoder(cfg, seed=0)
        params.kernels = [np.zeros_like(k) for k in params.kernels]
        params.head = np.zeros_like(params.head)
        x, _ = decoder_forward(params, latent)
        np.testing.assert_array_equal(x, 0.5)

    def test_output_shape(self):
        cfg = DecoderConfig(depth=2, channels=(3, 3, 3), latent_shape=(4, 4))
        params, latent = init_decoder(cfg, seed=1)
        x, _ = decoder_forward(params, latent)
        assert x.shape == (16, 16)

    def test_output_strictly_inside_unit_interval(self):
        cfg = DecoderConfig(depth=3, channels=(4, 4, 4, 4), latent_shape=(2, 2))
        params, latent = init_decoder(cfg, seed=2)
        x, _ = decoder_forward(params, latent)
        assert np.all(x > 0.0) and np.all(x < 1.0)

    def test_deterministic(self):
        cfg = DecoderConfig(depth=1, channels=(3, 3), latent_shape=(3, 3))
        params, latent = init_decoder(cfg, seed=3)
        x1, _ = decoder_forward(params, latent)
        x2, _ = decoder_forward(params, latent)
        assert np.array_equal(x1, x2)

    def test_matches_primitive_composition_oracle(self):
        cfg = DecoderConfig(depth=2, channels=(2, 3, 2), latent_shape=(2, 3))
        params, latent = init_decoder(cfg, seed=4)
        x, _ = decoder_forward(params, latent)
        # independently composed from the primitive ops
        h = latent.z
        for k in params.kernels:
            h = upsample2_forward(np.maximum(conv1x1_forward(h, k), 0.0))
        t = conv1x1_forward(h, params.head)[0]
        expected = 1.0 / (1.0 + np.exp(-t))
        np.testing.assert_allclose(x, expected, atol=1e-13)

    def test_doubling_head_pushes_away_from_half(self):
        cfg = DecoderConfig(depth=1, channels=(3, 3), latent_shape=(3, 3))
        params, latent = init_decoder(cfg, seed=5)
        x1, _ = decoder_forward(params, latent)
        params2 = params.copy()
        params2.head = 2.0 * params2.head
        x2, _ = decoder_forward(params2, latent)
        above = x1 > 0.5
        assert np.all(x2[above] >= x1[above])
        assert np.all(x2[~above] <= x1[~above])


def flatten_params(params):
    return np.concatenate([a.ravel() for a in params.as_list()])


def unflatten_params(flat, template):
    arrays = []
    offset = 0
    for a in template.as_list():
        arrays.append(flat[offset : offset + a.size].reshape(a.shape))
        offset += a.size
    return DecoderParams(kernels=arrays[:-1], head=arrays[-1])


class TestBackward:
    def test_zero_upstream_gives_zero_grads(self):
        cfg = DecoderConfig(depth=2, channels=(2, 2, 2), latent_shape=(2, 2))
        params, latent = init_decoder(cfg, seed=0)
        x, cache = decoder_forward(params, latent)
        grads = decoder_backward(params, latent, cache, np.zeros_like(x))
        for g in grads.as_list():
            np.testing.assert_array_equal(g, 0.0)

    def test_scalar_chain_rule_by_hand(self):
        # depth 1, single channel, 1x1 latent: the network is
        # sigmoid(h * up2(relu(k * z))) with the upsampler copying the value
        z = LatentInput(z=np.array([[[0.05]]]))
        params = DecoderParams(kernels=[np.array([[2.0]])], head=np.array([[3.0]]))
        x, cache = decoder_forward(params, z)
        s = 1.0 / (1.0 + np.exp(-3.0 * 0.1))  # k*z = 0.1, positive
        np.testing.assert_allclose(x, s, atol=1e-15)
        upstream = np.ones((2, 2))
        grads = decoder_backward(params, z, cache, upstream)
        # d/dh: 4 pixels, each s(1-s) * relu_out (0.1)
        assert grads.head[0, 0] == pytest.approx(4 * s * (1 - s) * 0.1, rel=1e-12)
        # d/dk: 4 pixels, each s(1-s) * h * z
        assert grads.kernels[0][0, 0] == pytest.approx(4 * s * (1 - s) * 3.0 * 0.05, rel=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_finite_differences(self, seed):
        cfg = DecoderConfig(depth=2, channels=(2, 3, 4), latent_shape=(2, 2))
        params, latent = init_decoder(cfg, seed=seed)
        rng = np.random.default_rng(seed + 100)
        target = rng.random(cfg.output_shape)

        def loss_of(flat):
            p = unflatten_params(flat, params)
            x, _ = decoder_forward(p, latent)
            return float(np.sum((x - target) ** 2))

        x, cache = decoder_forward(params, latent)
        grads = decoder_backward(params, latent, cache, 2.0 * (x - target))
        flat = flatten_params(params)
        numeric = finite_difference_grad(loss_of, flat)
        assert_grad_close(flatten_params(grads), numeric, f_scale=loss_of(flat))

    def test_stale_cache_rejected(self):
        cfg = DecoderConfig(depth=1, channels=(2, 2), latent_shape=(2, 2))
        params, latent = init_decoder(cfg, seed=0)
        _, cache = decoder_forward(params, latent)
        with pytest.raises(ValueError):
            decoder_backward(params, latent, cache, np.zeros((8, 8)))


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        cfg = DecoderConfig(depth=2, channels=(3, 4, 5), latent_shape=(2, 2))
        params, latent = init_decoder(cfg, seed=9)
        save_decoder(params, latent, tmp_path / "ckpt")
        loaded_params, loaded_latent = load_decoder(tmp_path / "ckpt")
        assert np.array_equal(loaded_latent.z, latent.z)
        for a, b in zip(loaded_params.as_list(), params.as_list()):
            assert np.array_equal(a, b)

    def test_truncated_binary_rejected(self, tmp_path):
        cfg = DecoderConfig(depth=1, channels=(2, 2), latent_shape=(2, 2))
        params, latent = init_decoder(cfg, seed=0)
        save_decoder(params, latent, tmp_path / "ckpt")
        bin_path = tmp_path / "ckpt.bin"
        bin_path.write_bytes(bin_path.read_bytes() + b"\x00" * 8)
        with pytest.raises(ValueError, match="manifest"):
            load_decoder(tmp_path / "ckpt")
