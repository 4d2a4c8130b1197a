"""Pixel-level spatial weighting: similarity scales and map blending."""

import numpy as np
import pytest

from adapedit.errors import ConfigError, DimensionError, RangeError
from adapedit.spatial import (
    blend_attention_maps,
    blend_divergence,
    resample_scales,
    spatial_scales,
)


def stochastic_rows(rng, shape):
    m = rng.random(shape).astype(np.float32) + 1e-3
    return (m / m.sum(axis=1, keepdims=True)).astype(np.float32)


class TestSpatialScales:
    def test_self_similarity_saturates(self, rng):
        key = np.array([0.6, 0.8], dtype=np.float32)
        feats = np.tile(key * 5.0, (4, 1))  # same direction, longer
        s = spatial_scales(key, feats, 1.0)
        np.testing.assert_allclose(s, 1.0, atol=1e-6)

    def test_orthogonal_is_zero(self):
        key = np.array([1.0, 0.0], dtype=np.float32)
        feats = np.array([[0.0, 3.0]], dtype=np.float32)
        np.testing.assert_allclose(spatial_scales(key, feats, 1.0), [0.0], atol=1e-7)

    def test_scale_weight_applies(self):
        key = np.array([1.0, 0.0], dtype=np.float32)
        feats = np.array([[2.0, 0.0]], dtype=np.float32)
        np.testing.assert_allclose(spatial_scales(key, feats, 0.8), [0.8], atol=1e-6)

    def test_clamped_to_unit_interval(self, rng):
        key = rng.standard_normal(8).astype(np.float32)
        key /= np.linalg.norm(key)
        feats = rng.standard_normal((128, 8)).astype(np.float32)
        s = spatial_scales(key, feats, 3.0)
        assert (s >= 0).all() and (s <= 1).all()

    def test_monotone_in_lambda(self, rng):
        key = rng.standard_normal(8).astype(np.float32)
        key /= np.linalg.norm(key)
        feats = rng.standard_normal((128, 8)).astype(np.float32)
        lo = spatial_scales(key, feats, 0.5)
        hi = spatial_scales(key, feats, 1.5)
        assert (hi >= lo - 1e-7).all()

    def test_negative_lambda_rejected(self):
        with pytest.raises(ConfigError):
            spatial_scales(np.ones(2), np.ones((3, 2)), -1.0)


class TestBlend:
    def test_lambda_zero_returns_original_bit_exact(self, rng):
        a = rng.random((5, 16)).astype(np.float32)
        b = rng.random((5, 16)).astype(np.float32)
        s = rng.random(16).astype(np.float32)
        out = blend_attention_maps(a, b, s, 0.0)
        assert np.array_equal(out, a)

    def test_lambda_one_full_scales_returns_edited_bit_exact(self, rng):
        a = rng.random((5, 16)).astype(np.float32)
        b = rng.random((5, 16)).astype(np.float32)
        out = blend_attention_maps(a, b, np.ones(16, dtype=np.float32), 1.0)
        assert np.array_equal(out, b)

    def test_scalar_evaluation(self):
        # original 0, edited 1, S = 0.5, lambda = 0.9 -> 0.45
        a = np.zeros((1, 1), dtype=np.float32)
        b = np.ones((1, 1), dtype=np.float32)
        out = blend_attention_maps(a, b, np.array([0.5], dtype=np.float32), 0.9)
        np.testing.assert_allclose(out, [[0.45]], atol=1e-7)

    def test_difference_identity(self, rng):
        a = rng.random((6, 32)).astype(np.float32)
        b = rng.random((6, 32)).astype(np.float32)
        s = rng.random(32).astype(np.float32)
        for ls in (0.25, 0.5, 0.75):
            out = blend_attention_maps(a, b, s, ls)
            want = a + np.float32(ls) * s[None, :] * (b - a)
            np.testing.assert_allclose(out, want, atol=1e-6)

    def test_row_stochastic_preserved(self, rng):
        # pixel-major orientation: one scale per row, broadcast across
        # tokens, keeps each pixel's attention a convex mix
        a = stochastic_rows(rng, (8, 24))
        b = stochastic_rows(rng, (8, 24))
        s = rng.random(8).astype(np.float32)[:, None]
        out = blend_attention_maps(a, b, s, 0.7)
        np.testing.assert_allclose(
            out.astype(np.float64).sum(axis=1), 1.0, atol=1e-5
        )

    def test_entrywise_envelope(self, rng):
        a = rng.random((4, 16)).astype(np.float32)
        b = rng.random((4, 16)).astype(np.float32)
        s = rng.random(16).astype(np.float32)
        out = blend_attention_maps(a, b, s, 0.6)
        assert (out >= np.minimum(a, b) - 1e-6).all()
        assert (out <= np.maximum(a, b) + 1e-6).all()

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            blend_attention_maps(np.zeros((2, 3)), np.zeros((3, 2)), np.zeros(3), 0.5)

    def test_scale_vector_length_checked(self):
        with pytest.raises(DimensionError):
            blend_attention_maps(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros(4), 0.5)

    def test_lambda_out_of_range(self):
        with pytest.raises(RangeError):
            blend_attention_maps(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros(1), 1.2)


class TestBlendDivergence:
    def test_exactly_linear_in_lambda(self, rng):
        a = rng.random((6, 64)).astype(np.float32)
        b = rng.random((6, 64)).astype(np.float32)
        s = rng.random(64).astype(np.float32)
        base = blend_divergence(a, b, s, 1.0)
        assert blend_divergence(a, b, s, 0.0) == 0.0
        assert blend_divergence(a, b, s, 0.5) == 0.5 * base

    def test_matches_direct_norm(self, rng):
        a = rng.random((6, 64)).astype(np.float32)
        b = rng.random((6, 64)).astype(np.float32)
        s = rng.random(64).astype(np.float32)
        out = blend_attention_maps(a, b, s, 0.8)
        direct = float(np.linalg.norm((out - a).astype(np.float64)))
        assert abs(blend_divergence(a, b, s, 0.8) - direct) < 1e-4 * max(direct, 1)


class TestResampleScales:
    def test_identity_at_native_resolution(self, rng):
        s = rng.random(1024).astype(np.float32)
        assert resample_scales(s, 32, 32) is s

    def test_constant_resamples_to_constant(self):
        s = np.full(1024, 0.3, dtype=np.float32)
        out = resample_scales(s, 16, 16)
        assert out.shape == (256,)
        np.testing.assert_allclose(out, 0.3, atol=1e-6)

    def test_non_square_rejected(self):
        with pytest.raises(DimensionError):
            resample_scales(np.zeros(1000, dtype=np.float32), 16, 16)
