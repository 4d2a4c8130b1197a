"""Kernel-level tests with independent oracles.

Matmul checks against a pure-Python triple loop, softmax against
extended-precision values frozen from mpmath, resizing against a
hand-evaluated bilinear grid.
"""

import numpy as np
import pytest

from adapedit.errors import DimensionError, RangeError
from adapedit.tensorops import (
    l2_normalize_rows,
    lerp,
    mask_below,
    matmul,
    renormalize_rows,
    resize_bilinear,
    softmax_rows,
)

# frozen from a 50-digit mpmath evaluation of exp/sum
SOFTMAX_123 = [0.090030573170380458, 0.24472847105479765, 0.66524095577482189]


def naive_matmul(a, b):
    """Triple-loop product over Python floats."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.empty((n, m), dtype=np.float64)
    al = a.tolist()
    bl = b.tolist()
    for i in range(n):
        row = al[i]
        for j in range(m):
            acc = 0.0
            for p in range(k):
                acc += row[p] * bl[p][j]
            out[i, j] = acc
    return out


class TestSoftmaxRows:
    def test_symmetry(self):
        out = softmax_rows([[0.0, 0.0]])
        np.testing.assert_array_equal(out, [[0.5, 0.5]])

    def test_saturation_no_overflow(self):
        out = softmax_rows([[1000.0, 0.0]])
        assert np.isfinite(out).all()
        assert abs(out[0, 0] - 1.0) < 1e-6
        assert abs(out[0, 1]) < 1e-6

    def test_against_extended_precision(self):
        out = softmax_rows([[1.0, 2.0, 3.0]])
        np.testing.assert_allclose(out[0], SOFTMAX_123, atol=1e-4)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            m = rng.standard_normal((rng.integers(1, 20), rng.integers(1, 30))) * 50
            sums = softmax_rows(m).astype(np.float64).sum(axis=1)
            np.testing.assert_allclose(sums, 1.0, atol=1e-5)

    def test_empty_rejected(self):
        with pytest.raises(DimensionError):
            softmax_rows(np.zeros((0, 3), dtype=np.float32))

    def test_deterministic(self):
        m = np.random.default_rng(0).standard_normal((8, 8)).astype(np.float32)
        assert np.array_equal(softmax_rows(m), softmax_rows(m))


class TestL2NormalizeRows:
    def test_three_four_five(self):
        out = l2_normalize_rows([[3.0, 4.0]])
        np.testing.assert_allclose(out, [[0.6, 0.8]], atol=1e-7)

    def test_zero_row_passthrough(self):
        out = l2_normalize_rows([[0.0, 0.0]])
        np.testing.assert_array_equal(out, [[0.0, 0.0]])

    def test_unit_norms(self):
        m = np.random.default_rng(5).standard_normal((4, 8))
        norms = np.linalg.norm(l2_normalize_rows(m).astype(np.float64), axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-5)


class TestMatmul:
    def test_identity(self):
        m = np.random.default_rng(1).standard_normal((4, 7)).astype(np.float32)
        np.testing.assert_allclose(matmul(np.eye(4), m), m, rtol=1e-6)

    def test_one_hot_selects_row(self):
        m = np.random.default_rng(2).standard_normal((3, 5)).astype(np.float32)
        out = matmul([[0.0, 1.0, 0.0]], m)
        np.testing.assert_array_equal(out[0], m[1])

    def test_against_triple_loop(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n, k, m = rng.integers(1, 24, size=3)
            a = rng.standard_normal((n, k)).astype(np.float32)
            b = rng.standard_normal((k, m)).astype(np.float32)
            got = matmul(a, b).astype(np.float64)
            want = naive_matmul(a, b)
            err = np.linalg.norm(got - want) / max(np.linalg.norm(want), 1e-30)
            assert err < 1e-5

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            matmul(np.zeros((2, 3)), np.zeros((4, 2)))


class TestMaskBelow:
    def test_boundary_kept(self):
        # strict less-than: the threshold value itself survives
        out = mask_below([[0.01, 0.03, 0.05]], 0.03)
        want = np.array([[0.0, 0.03, 0.05]], dtype=np.float32)
        np.testing.assert_array_equal(out, want)

    def test_zero_fixed_point(self):
        out = mask_below([[0.0, 0.0, 0.0]], 0.03)
        np.testing.assert_array_equal(out, [[0.0, 0.0, 0.0]])

    def test_idempotent_and_never_increases(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            m = rng.random((6, 9)).astype(np.float32)
            once = mask_below(m, 0.03)
            twice = mask_below(once, 0.03)
            assert np.array_equal(once, twice)
            assert (once <= m).all()

    def test_bad_threshold(self):
        with pytest.raises(RangeError):
            mask_below([[0.5]], 1.0)


class TestLerp:
    def test_endpoints_bit_exact(self):
        rng = np.random.default_rng(9)
        a = rng.standard_normal((5, 5)).astype(np.float32)
        b = rng.standard_normal((5, 5)).astype(np.float32)
        assert np.array_equal(lerp(a, b, 0.0), a)
        assert np.array_equal(lerp(a, b, 1.0), b)

    def test_scalar_value(self):
        out = lerp(np.zeros((1, 1)), np.ones((1, 1)), 0.45)
        np.testing.assert_allclose(out, [[0.45]], atol=1e-7)

    def test_stays_in_envelope(self):
        rng = np.random.default_rng(10)
        a = rng.standard_normal((4, 6)).astype(np.float32)
        b = rng.standard_normal((4, 6)).astype(np.float32)
        w = rng.random((4, 6)).astype(np.float32)
        out = lerp(a, b, w)
        assert (out >= np.minimum(a, b) - 1e-6).all()
        assert (out <= np.maximum(a, b) + 1e-6).all()

    def test_weight_out_of_range(self):
        with pytest.raises(RangeError):
            lerp(np.zeros((1, 1)), np.ones((1, 1)), 1.5)


class TestRenormalizeRows:
    def test_rows_sum_to_one(self):
        m = np.random.default_rng(12).random((5, 7)).astype(np.float32) + 0.1
        sums = renormalize_rows(m).astype(np.float64).sum(axis=1)
        np.testing.assert_allclose(sums, 1.0, atol=1e-6)

    def test_zero_rows_pass(self):
        m = np.zeros((2, 3), dtype=np.float32)
        assert np.array_equal(renormalize_rows(m), m)


class TestResizeBilinear:
    def test_constant_stays_constant(self):
        m = np.full((16, 16), 0.25, dtype=np.float32)
        out = resize_bilinear(m, 32, 32)
        np.testing.assert_allclose(out, 0.25, atol=1e-6)

    def test_hand_evaluated_grid(self):
        # corner-aligned 2x2 -> 4x4 of [[1,2],[3,5]], fractions worked by hand
        src = np.array([[1.0, 2.0], [3.0, 5.0]], dtype=np.float32)
        want = np.array(
            [
                [1.0, 4 / 3, 5 / 3, 2.0],
                [5 / 3, 19 / 9, 23 / 9, 3.0],
                [7 / 3, 26 / 9, 31 / 9, 4.0],
                [3.0, 11 / 3, 13 / 3, 5.0],
            ]
        )
        np.testing.assert_allclose(resize_bilinear(src, 4, 4), want, atol=1e-6)

    def test_corners_exact(self):
        src = np.random.default_rng(13).random((8, 8)).astype(np.float32)
        out = resize_bilinear(src, 32, 32)
        for (i, j), (oi, oj) in [((0, 0), (0, 0)), ((0, 7), (0, 31)),
                                 ((7, 0), (31, 0)), ((7, 7), (31, 31))]:
            assert abs(out[oi, oj] - src[i, j]) < 1e-6

    def test_preserves_cross_axis_sums(self):
        # pixel rows that sum to 1 over tokens still do after per-token resize
        rng = np.random.default_rng(14)
        maps = rng.random((16 * 16, 5)).astype(np.float32)
        maps /= maps.sum(axis=1, keepdims=True)
        resized = np.stack(
            [
                resize_bilinear(maps[:, j].reshape(16, 16), 32, 32).reshape(-1)
                for j in range(5)
            ],
            axis=1,
        )
        np.testing.assert_allclose(resized.sum(axis=1), 1.0, atol=1e-5)
