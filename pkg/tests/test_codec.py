"""Codec pipeline tests: companding against series/high-precision oracles,
geometry and parameter-count invariants, checkpoint round trips, and the
training smoke test."""

import math

import mpmath
import numpy as np
import pytest

from wlcodec import codec as cd
from wlcodec import diffcore as dc


def erf_series(x, terms=40):
    """Taylor series for erf, independent of scipy."""
    acc = 0.0
    for n in range(terms):
        acc += (-1) ** n * x ** (2 * n + 1) / (math.factorial(n) * (2 * n + 1))
    return 2.0 / math.sqrt(math.pi) * acc


def phi_oracle(x):
    return 0.5 * (1.0 + erf_series(x / math.sqrt(2.0)))


def phi_inv_oracle(p):
    return float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(p) - 1))


def tiny_config(**kw):
    base = dict(kind="2d", c_x=1, levels=2, c_z=4, c_hidden=6, decoder_depth=1)
    base.update(kw)
    return cd.CodecConfig(**base)


class TestConfig:
    def test_presets_dimensionality_reduction(self):
        assert cd.preset("image_4x").dimensionality_reduction == 4.0
        assert cd.preset("image_16x").dimensionality_reduction == 16.0
        assert abs(cd.preset("audio_5x").dimensionality_reduction - 512 / 108) < 1e-12
        assert abs(cd.preset("audio_19x").dimensionality_reduction - 512 / 27) < 1e-12

    def test_analysis_param_counts_under_100k(self):
        expected = {
            "image_4x": 9_264,
            "image_16x": 2_316,
            "audio_5x": 55_404,
            "audio_19x": 13_851,
        }
        for name, count in expected.items():
            config = cd.preset(name)
            assert config.analysis_param_count == count
            assert config.analysis_param_count < 100_000

    def test_rejects_oversized_latent(self):
        with pytest.raises(ValueError, match="c_z"):
            cd.CodecConfig("2d", c_x=1, levels=1, c_z=5)

    def test_mapping_round_trip(self):
        config = cd.preset("audio_19x")
        assert cd.CodecConfig.from_mapping(config.to_mapping()) == config


class TestAnalyze:
    def test_zero_signal_zero_latent(self):
        model = cd.init_model(tiny_config(), seed=0)
        z = cd.analyze(model, np.zeros((1, 16, 16), dtype=np.float32))
        np.testing.assert_array_equal(z, np.zeros((4, 4, 4)))

    def test_rgb_16x_geometry(self):
        config = cd.CodecConfig("2d", c_x=3, levels=3, c_z=12)
        model = cd.init_model(config, seed=1)
        z = cd.analyze(model, np.zeros((3, 256, 256), dtype=np.float32))
        assert z.shape == (12, 32, 32)
        assert config.dimensionality_reduction == 16.0

    def test_stereo_audio_geometry(self):
        config = cd.CodecConfig("1d", c_x=2, levels=8, c_z=108)
        model = cd.init_model(config, seed=2)
        z = cd.analyze(model, np.zeros((2, 65536), dtype=np.float32))
        assert z.shape == (108, 256)
        assert abs(config.dimensionality_reduction - 4.7407) < 1e-3

    def test_linearity_single_precision(self):
        config = tiny_config()
        model = cd.init_model(config, seed=3)
        rng = np.random.default_rng(4)
        x = rng.uniform(-1, 1, (1, 16, 16)).astype(np.float32)
        y = rng.uniform(-1, 1, (1, 16, 16)).astype(np.float32)
        a, b = np.float32(1.3), np.float32(-0.7)
        lhs = cd.analyze(model, a * x + b * y)
        rhs = a * cd.analyze(model, x) + b * cd.analyze(model, y)
        assert np.abs(lhs - rhs).max() < 1e-5


class TestCompanding:
    def test_zero_maps_to_zero(self):
        for sigma in (0.1, 1.0, 7.3):
            out = cd.compand(np.zeros((2, 4)), np.full(2, sigma))
            np.testing.assert_allclose(out, 0.0, atol=1e-12)

    def test_limit_approaches_half_from_below(self):
        out = cd.compand(np.array([[1e4], [1e12]]), np.ones(2), axes=1)
        assert np.all(out < 127.5)
        assert np.all(out > 127.49)

    def test_one_sigma_matches_erf_series(self):
        expected = 255.0 * (phi_oracle(1.0) - 0.5)
        for sigma in (0.5, 1.0, 3.0):
            got = cd.compand(np.array([[sigma]]), np.array([sigma]), axes=1)
            np.testing.assert_allclose(got[0, 0], expected, atol=1e-7)
        assert abs(expected - 87.04) < 0.01

    def test_monotonic_per_channel(self):
        # strictly increasing over the numerically meaningful range; beyond
        # ~8 sigma the float64 CDF saturates and differences hit roundoff
        z = np.linspace(-8 * 1.7, 8 * 1.7, 401)[None, :]
        y = cd.compand(z, np.array([1.7]), axes=1)
        assert np.all(np.diff(y[0]) > 0)
        z_wide = np.linspace(-1e4, 1e4, 101)[None, :]
        assert np.all(np.diff(cd.compand(z_wide, np.array([1.7]), axes=1)[0]) >= 0)

    def test_rejects_bad_scale(self):
        with pytest.raises(ValueError, match="positive"):
            cd.compand(np.zeros((1, 3)), np.array([0.0]), axes=1)
        with pytest.raises(ValueError, match="positive"):
            cd.compand(np.zeros((1, 3)), np.array([-1.0]), axes=1)

    def test_round_trip_within_4_sigma(self):
        for sigma in (0.25, 1.0, 5.0):
            z = np.linspace(-4 * sigma, 4 * sigma, 257)[None, :]
            back = cd.decompand(cd.compand(z, np.array([sigma]), axes=1),
                                np.array([sigma]), axes=1)
            assert np.abs(back - z).max() < 1e-4 * sigma

    def test_decompand_zero(self):
        out = cd.decompand(np.zeros((3, 5), dtype=np.int8), np.ones(3))
        np.testing.assert_allclose(out, 0.0, atol=1e-12)

    def test_decompand_positive_edge_matches_inverse_cdf_oracle(self):
        got = cd.decompand(np.array([[127]], dtype=np.int8), np.ones(1), axes=1)
        expected = phi_inv_oracle(127 / 255 + 0.5)
        # integer latents decompand through the float32 production path
        np.testing.assert_allclose(got[0, 0], expected, rtol=5e-6)
        # p = 127/255 + 1/2 = 0.99804, whose inverse CDF sits near 2.88
        assert 2.87 < expected < 2.89

    def test_decompand_matches_oracle_grid(self):
        qs = np.array([-127, -96, -31, -1, 0, 1, 31, 96, 127], dtype=np.int8)
        got = cd.decompand(qs[None, :], np.array([2.5]), axes=1)
        expected = [2.5 * phi_inv_oracle(float(q) / 255 + 0.5) for q in qs]
        np.testing.assert_allclose(got[0], expected, rtol=5e-6, atol=1e-7)


class TestBottleneckAndQuantize:
    def test_noise_statistics(self):
        rng = np.random.default_rng(5)
        y = np.zeros((1000, 1000), dtype=np.float32)
        noisy = cd.bottleneck_noise(y, rng)
        delta = noisy - y
        assert abs(delta.mean()) < 0.002
        assert delta.min() >= -0.5 and delta.max() <= 0.5

    def test_zero_width_is_identity(self):
        y = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(cd.bottleneck_noise(y, np.random.default_rng(0), 0.0), y)

    def test_quantize_rounding(self):
        y = np.array([0.4, -0.6, 127.49, -127.49, 0.5, -0.5])
        np.testing.assert_array_equal(cd.quantize(y), [0, -1, 127, -127, 1, -1])

    def test_quantize_bound(self):
        rng = np.random.default_rng(6)
        y = rng.uniform(-127.4999, 127.4999, 10_000)
        q = cd.quantize(y)
        assert np.abs(q.astype(np.float64) - y).max() <= 0.5

    def test_quantized_range_fuzz(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            z = rng.standard_normal((3, 8)) * rng.uniform(0.01, 100)
            sigma = rng.uniform(0.01, 10, 3)
            q = cd.quantize(cd.compand(z, sigma, axes=1))
            assert q.dtype == np.int8
            assert q.min() >= -127 and q.max() <= 127

    def test_quantized_range_extreme_values(self):
        z = np.array([[-1e30, -1e6, 0.0, 1e6, 1e30]])
        q = cd.quantize(cd.compand(z, np.array([1e-3]), axes=1))
        assert q.min() >= -127 and q.max() <= 127


class TestSynthesize:
    def test_zero_exit_gives_zero_signal(self):
        model = cd.init_model(tiny_config(), seed=8)
        z = np.ones((4, 4, 4), dtype=np.float32)
        out = cd.synthesize(model, z)
        np.testing.assert_allclose(out, 0.0, atol=1e-7)
        assert out.shape == (1, 16, 16)

    def test_decode_geometry_16x(self):
        config = cd.CodecConfig("2d", c_x=3, levels=3, c_z=12, c_hidden=8, decoder_depth=1)
        model = cd.init_model(config, seed=9)
        out = cd.synthesize(model, np.zeros((12, 32, 32), dtype=np.float32))
        assert out.shape == (3, 256, 256)

    def test_basis_gallery_shapes(self):
        config = cd.CodecConfig("2d", c_x=3, levels=3, c_z=12, c_hidden=8, decoder_depth=1)
        model = cd.init_model(config, seed=10)
        gallery = cd.basis_gallery(model, amplitude=31.0, grid=3)
        assert gallery.shape == (12, 3, 24, 24)

    def test_geometry_mismatch_rejected(self):
        model = cd.init_model(tiny_config(), seed=11)
        with pytest.raises(ValueError, match="latent channels"):
            cd.synthesize(model, np.zeros((5, 4, 4), dtype=np.float32))


class TestTrainingGraph:
    def test_full_graph_gradients(self):
        config = cd.CodecConfig("2d", c_x=3, levels=2, c_z=8, c_hidden=6, decoder_depth=1)
        rng = np.random.default_rng(12)
        model = cd.init_model(config, rng, dtype=np.float64)
        # perturb the zero init so every parameter, exit conv included, has
        # a generic gradient
        params = {
            k: v + 0.05 * rng.standard_normal(v.shape)
            for k, v in model.params.items()
        }
        x = rng.uniform(-1, 1, (2, 3, 16, 16))
        noise = rng.uniform(-0.5, 0.5, (2, 8, 4, 4))

        def build(ts):
            return cd.build_training_loss(ts, x, noise, config)

        err = dc.grad_check(build, params, probes=10, h=1e-4, seed=13)
        assert err < 1e-3, f"full-graph gradient mismatch {err:.2e}"

    def test_smoke_training_reduces_loss(self):
        rng = np.random.default_rng(14)
        patches = rng.uniform(-1, 1, (64, 1, 32, 32)).astype(np.float32)
        config = cd.CodecConfig("2d", c_x=1, levels=2, c_z=8, c_hidden=8, decoder_depth=1)
        result = cd.train(config, patches, steps=200, batch_size=8, lr=1e-3, seed=15)
        assert result.loss_history[-1] < result.loss_history[0]
        assert len(result.loss_history) == 200

    def test_training_deterministic(self):
        rng = np.random.default_rng(16)
        patches = rng.uniform(-1, 1, (16, 1, 16, 16)).astype(np.float32)
        config = cd.CodecConfig("2d", c_x=1, levels=1, c_z=2, c_hidden=4, decoder_depth=1)
        r1 = cd.train(config, patches, steps=20, batch_size=4, lr=1e-3, seed=17)
        r2 = cd.train(config, patches, steps=20, batch_size=4, lr=1e-3, seed=17)
        assert r1.loss_history == r2.loss_history
        for k in r1.model.params:
            np.testing.assert_array_equal(r1.model.params[k], r2.model.params[k])

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_divergence_detected(self):
        rng = np.random.default_rng(18)
        patches = (rng.uniform(-1, 1, (8, 1, 8, 8)) * 1e30).astype(np.float32)
        config = cd.CodecConfig("2d", c_x=1, levels=1, c_z=2, c_hidden=4, decoder_depth=1)
        with pytest.raises(cd.TrainingDivergedError):
            cd.train(config, patches, steps=50, batch_size=4, lr=1e3, seed=19)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        config = cd.CodecConfig("1d", c_x=2, levels=3, c_z=6, c_hidden=8, decoder_depth=2)
        model = cd.init_model(config, seed=20)
        path = tmp_path / "model.wlcm"
        cd.save_model(model, path)
        loaded = cd.load_model(path)
        assert loaded.config == config
        assert sorted(loaded.params) == sorted(model.params)
        for k in model.params:
            np.testing.assert_array_equal(loaded.params[k], model.params[k])
        # a second save must reproduce the file byte for byte
        path2 = tmp_path / "model2.wlcm"
        cd.save_model(loaded, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.wlcm"
        path.write_bytes(b"NOPE" + bytes(32))
        with pytest.raises(cd.ModelFormatError, match="magic"):
            cd.load_model(path)

    def test_truncated_rejected(self, tmp_path):
        config = tiny_config()
        model = cd.init_model(config, seed=21)
        path = tmp_path / "model.wlcm"
        cd.save_model(model, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 7])
        with pytest.raises(cd.ModelFormatError, match="truncated"):
            cd.load_model(path)

    def test_encode_decode_after_reload(self, tmp_path):
        config = tiny_config()
        model = cd.init_model(config, seed=22)
        rng = np.random.default_rng(23)
        x = rng.uniform(-1, 1, (1, 16, 16)).astype(np.float32)
        q = cd.encode_latent(model, x)
        path = tmp_path / "model.wlcm"
        cd.save_model(model, path)
        q2 = cd.encode_latent(cd.load_model(path), x)
        np.testing.assert_array_equal(q, q2)
