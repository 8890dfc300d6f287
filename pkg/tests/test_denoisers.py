"""Denoiser built-ins, latent codecs, and the LatentBatch container."""

import numpy as np
import pytest

from vidrestore import (
    Denoiser,
    FuncDenoiser,
    LatentBatch,
    ParameterError,
    ShapeError,
    gaussian_prior_denoiser,
    haar_codec,
    identity_codec,
    make_schedule,
    tweedie_denoise,
    zero_denoiser,
)


class TestZeroDenoiser:
    def test_predicts_zero(self):
        den = zero_denoiser()
        z = np.random.default_rng(0).standard_normal((3, 4, 4)).astype(np.float32)
        out = den.eps(z, 5)
        assert out.dtype == np.float32
        assert np.all(out == 0.0)

    def test_is_deterministic_and_named(self):
        den = zero_denoiser()
        assert den.deterministic
        assert den.name == "zero"


class TestGaussianPriorDenoiser:
    def test_slope_matches_monte_carlo_posterior_mean(self):
        # Oracle: draw (x, e) ~ N(0, I) jointly, form z; the least-squares
        # slope of e against z estimates E[e | z] / z, which the analytic
        # denoiser must match within 1% at 1e5 samples.
        sched = make_schedule(25, "scaled_linear")
        rng = np.random.default_rng(7)
        n = 100_000
        for t in (3, 12, 24):
            ab = float(sched.alpha_bar[t])
            x = rng.standard_normal(n)
            e = rng.standard_normal(n)
            z = np.sqrt(ab) * x + np.sqrt(1.0 - ab) * e
            slope_mc = float(np.dot(z, e) / np.dot(z, z))

            den = gaussian_prior_denoiser(sched)
            probe = np.full((1, 2, 2), 1.0, dtype=np.float32)
            slope_den = float(den.eps(probe, t)[0, 0, 0])
            assert slope_den == pytest.approx(slope_mc, rel=0.01)

    def test_formula_scale(self):
        sched = make_schedule(25, "scaled_linear")
        den = gaussian_prior_denoiser(sched)
        z = np.random.default_rng(1).standard_normal((2, 3, 3)).astype(np.float32)
        for t in (1, 10, 25):
            want = (z.astype(np.float64) * np.sqrt(1.0 - float(sched.alpha_bar[t]))).astype(
                np.float32
            )
            np.testing.assert_array_equal(den.eps(z, t), want)

    def test_tweedie_composition_is_pure_scaling(self):
        # eps = sqrt(1-ab) z  =>  x0_hat = sqrt(ab) z.
        sched = make_schedule(25, "scaled_linear")
        den = gaussian_prior_denoiser(sched)
        z = np.random.default_rng(2).standard_normal((1, 4, 4)).astype(np.float32)
        for t in (2, 13, 25):
            x0 = tweedie_denoise(z, den.eps(z, t), t, sched)
            want = z * np.float32(np.sqrt(float(sched.alpha_bar[t])))
            np.testing.assert_allclose(x0, want, atol=1e-5)

    def test_bit_identical_across_calls(self):
        sched = make_schedule(25, "scaled_linear")
        den = gaussian_prior_denoiser(sched)
        z = np.random.default_rng(3).standard_normal((2, 5, 5)).astype(np.float32)
        assert np.array_equal(den.eps(z, 7), den.eps(z, 7))

    def test_rejects_out_of_range_timestep(self):
        sched = make_schedule(25, "scaled_linear")
        den = gaussian_prior_denoiser(sched)
        z = np.zeros((1, 2, 2), np.float32)
        with pytest.raises(ParameterError):
            den.eps(z, 26)


class TestFuncDenoiser:
    def test_satisfies_protocol(self):
        assert isinstance(zero_denoiser(), Denoiser)
        assert isinstance(FuncDenoiser(fn=lambda z, t: z), Denoiser)

    def test_wrong_output_shape_raises(self):
        den = FuncDenoiser(fn=lambda z, t: z[:1])
        with pytest.raises(ShapeError):
            den.eps(np.zeros((2, 3, 3), np.float32), 1)

    def test_passes_through_matching_shape(self):
        den = FuncDenoiser(fn=lambda z, t: z * np.float32(2.0))
        z = np.ones((1, 2, 2), np.float32)
        np.testing.assert_array_equal(den.eps(z, 1), z * 2)


class TestIdentityCodec:
    def test_roundtrip_bit_exact(self):
        codec = identity_codec()
        frame = np.random.default_rng(0).standard_normal((3, 6, 6)).astype(np.float32)
        z = codec.encode(frame)
        back = codec.decode(z)
        assert np.array_equal(z, frame)
        assert np.array_equal(back, frame)

    def test_encode_copies(self):
        codec = identity_codec()
        frame = np.zeros((1, 2, 2), np.float32)
        z = codec.encode(frame)
        frame[0, 0, 0] = 5.0
        assert z[0, 0, 0] == 0.0

    def test_latent_shape(self):
        assert identity_codec().latent_shape((3, 16, 16)) == (3, 16, 16)


class TestHaarCodec:
    def test_constant_image_concentrates_in_dc(self):
        # Orthonormal 2x2 Haar: a constant block of value v has one DC
        # coefficient of 2v and zero detail coefficients.
        codec = haar_codec()
        v = 0.75
        frame = np.full((1, 4, 4), v, dtype=np.float32)
        z = codec.encode(frame)
        assert z.shape == (4, 2, 2)
        np.testing.assert_allclose(z[0], 2.0 * v, atol=1e-7)
        np.testing.assert_allclose(z[1:], 0.0, atol=1e-7)

    def test_channel_layout_groups_subbands_per_channel(self):
        # Input channel k maps to latent channels 4k..4k+3 (DC first).
        codec = haar_codec()
        frame = np.zeros((3, 4, 4), np.float32)
        frame[1] = 1.0
        z = codec.encode(frame)
        assert np.allclose(z[4], 2.0)
        nonzero = {i for i in range(12) if np.any(z[i] != 0)}
        assert nonzero == {4}

    def test_roundtrip_on_random_frames(self):
        codec = haar_codec()
        frame = np.random.default_rng(5).standard_normal((3, 8, 8)).astype(np.float32)
        back = codec.decode(codec.encode(frame))
        assert back.shape == frame.shape
        np.testing.assert_allclose(back, frame, atol=1e-6)

    def test_energy_preserved(self):
        codec = haar_codec()
        frame = np.random.default_rng(6).standard_normal((2, 8, 8)).astype(np.float32)
        e_pix = float(np.sum(frame.astype(np.float64) ** 2))
        e_lat = float(np.sum(codec.encode(frame).astype(np.float64) ** 2))
        assert e_lat == pytest.approx(e_pix, rel=1e-6)

    def test_transform_matrix_is_orthonormal(self):
        # Dense oracle: encode the 64 basis frames of a 1x8x8 input and check
        # the resulting 64x64 matrix Q satisfies Q^T Q = I.
        codec = haar_codec()
        cols = []
        for i in range(64):
            frame = np.zeros(64, np.float32)
            frame[i] = 1.0
            cols.append(codec.encode(frame.reshape(1, 8, 8)).ravel().astype(np.float64))
        q = np.stack(cols, axis=1)
        np.testing.assert_allclose(q.T @ q, np.eye(64), atol=1e-6)

    def test_latent_shape_and_divisibility(self):
        codec = haar_codec()
        assert codec.latent_shape((3, 8, 8)) == (12, 4, 4)
        with pytest.raises(ShapeError):
            codec.latent_shape((3, 7, 8))

    def test_odd_dims_rejected(self):
        codec = haar_codec()
        with pytest.raises(ShapeError):
            codec.encode(np.zeros((1, 5, 4), np.float32))
        with pytest.raises(ShapeError):
            codec.decode(np.zeros((3, 2, 2), np.float32))


class TestLatentBatch:
    def test_holds_frames_and_timestep(self):
        data = np.random.default_rng(0).standard_normal((4, 3, 2, 2)).astype(np.float32)
        batch = LatentBatch(data=data, t=7)
        assert batch.n_frames == 4
        assert batch.latent_shape == (3, 2, 2)
        assert batch.t == 7

    def test_data_is_frozen_copy(self):
        data = np.zeros((1, 1, 2, 2), np.float32)
        batch = LatentBatch(data=data, t=0)
        data[0, 0, 0, 0] = 9.0
        assert batch.data[0, 0, 0, 0] == 0.0
        with pytest.raises(ValueError):
            batch.data[0, 0, 0, 0] = 1.0

    def test_validation(self):
        with pytest.raises(ShapeError):
            LatentBatch(data=np.zeros((2, 2, 2), np.float32), t=0)
        with pytest.raises(ParameterError):
            LatentBatch(data=np.zeros((1, 1, 2, 2), np.float32), t=-1)
