"""Forward ops against the naive-loop oracles, plus their contracts."""

import numpy as np
import pytest

from scnet import ops
from scnet.errors import NumericsError, ShapeError

from reference_ops import (affine_ref, conv2d_ref, global_avg_pool_ref,
                           maxpool2d_ref)


class TestConv2d:
    def test_all_ones_3x3(self):
        x = np.ones((1, 1, 3, 3))
        w = np.ones((1, 1, 3, 3))
        out = ops.conv2d(x, w, np.zeros(1))
        assert out.shape == (1, 1, 1, 1)
        assert out[0, 0, 0, 0] == 9.0

    def test_1x1_identity_kernel(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 3, 5, 4))
        w = np.zeros((3, 3, 1, 1))
        for c in range(3):
            w[c, c, 0, 0] = 1.0
        out = ops.conv2d(x, w, np.zeros(3))
        np.testing.assert_array_equal(out, x)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 3, 8, 8))
        w = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        got = ops.conv2d(x, w, b)
        want = conv2d_ref(x, w, b)
        assert np.abs(got - want).max() < 1e-6

    @pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 0), (2, 1),
                                            (3, 2)])
    def test_matches_oracle_strided_padded(self, stride, pad):
        rng = np.random.default_rng(2 + stride * 10 + pad)
        x = rng.standard_normal((2, 2, 7, 6))
        w = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        got = ops.conv2d(x, w, b, stride, pad)
        want = conv2d_ref(x, w, b, stride, pad)
        assert got.shape == want.shape
        assert np.abs(got - want).max() < 1e-6

    def test_linear_in_input_and_weight(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((1, 2, 6, 6))
        w = rng.standard_normal((2, 2, 3, 3))
        b = np.zeros(2)
        base = ops.conv2d(x, w, b)
        np.testing.assert_allclose(ops.conv2d(2.5 * x, w, b), 2.5 * base,
                                   rtol=1e-6)
        np.testing.assert_allclose(ops.conv2d(x, -3.0 * w, b), -3.0 * base,
                                   rtol=1e-6)

    def test_channel_mismatch_names_dimension(self):
        with pytest.raises(ShapeError, match="channels"):
            ops.conv2d(np.ones((1, 3, 4, 4)), np.ones((2, 4, 3, 3)),
                       np.zeros(2))

    def test_kernel_too_big(self):
        with pytest.raises(ShapeError, match="kernel"):
            ops.conv2d(np.ones((1, 1, 3, 3)), np.ones((1, 1, 5, 5)),
                       np.zeros(1))

    def test_nan_surfaces(self):
        x = np.ones((1, 1, 3, 3))
        x[0, 0, 0, 0] = np.nan
        with pytest.raises(NumericsError):
            ops.conv2d(x, np.ones((1, 1, 3, 3)), np.zeros(1))


class TestMaxpool2d:
    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(4)
        for k, stride in [(2, 2), (3, 1), (2, 1), (3, 3)]:
            x = rng.standard_normal((2, 3, 7, 7))
            got, _ = ops.maxpool2d(x, k, stride)
            want = maxpool2d_ref(x, k, stride)
            assert np.abs(got - want).max() < 1e-6

    def test_output_values_come_from_windows(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((1, 2, 6, 6))
        out, _ = ops.maxpool2d(x, 2, 2)
        for c in range(2):
            for oi in range(3):
                for oj in range(3):
                    window = x[0, c, 2 * oi:2 * oi + 2, 2 * oj:2 * oj + 2]
                    assert out[0, c, oi, oj] in window

    def test_window_exceeds_input(self):
        with pytest.raises(ShapeError, match="window"):
            ops.maxpool2d(np.ones((1, 1, 3, 3)), 4)


class TestGlobalAvgPool:
    def test_constant_channels(self):
        x = np.zeros((1, 2, 2, 2))
        x[0, 0] = 1.0
        x[0, 1] = 2.0
        np.testing.assert_array_equal(ops.global_avg_pool(x), [[1.0, 2.0]])

    def test_1x1_spatial_is_squeeze(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((3, 4, 1, 1))
        np.testing.assert_array_equal(ops.global_avg_pool(x), x[:, :, 0, 0])

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((3, 5, 4, 4))
        got = ops.global_avg_pool(x)
        want = global_avg_pool_ref(x)
        assert np.abs(got - want).max() < 1e-6


class TestAffineRelu:
    def test_affine_matches_oracle(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((3, 7))
        w = rng.standard_normal((7, 4))
        b = rng.standard_normal(4)
        got = ops.affine(x, w, b)
        assert np.abs(got - affine_ref(x, w, b)).max() < 1e-6

    def test_affine_shape_errors(self):
        with pytest.raises(ShapeError, match="features"):
            ops.affine(np.ones((2, 3)), np.ones((4, 5)), np.zeros(5))
        with pytest.raises(ShapeError, match="bias"):
            ops.affine(np.ones((2, 3)), np.ones((3, 5)), np.zeros(4))

    def test_relu(self):
        x = np.array([[-1.0, 0.0, 2.0]])
        np.testing.assert_array_equal(ops.relu(x), [[0.0, 0.0, 2.0]])


class TestDtypes:
    """Ops keep the graph-wide element type of their inputs."""

    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_conv_preserves_dtype(self, dtype):
        x = np.ones((1, 1, 4, 4), dtype=dtype)
        w = np.ones((2, 1, 3, 3), dtype=dtype)
        out = ops.conv2d(x, w, np.zeros(2, dtype=dtype), pad=1)
        assert out.dtype == dtype
        dx, dw, db = ops.conv2d_backward(out, x, w, pad=1)
        assert dx.dtype == dtype and dw.dtype == dtype and db.dtype == dtype

    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_pool_and_gap_preserve_dtype(self, dtype):
        x = np.ones((1, 2, 4, 4), dtype=dtype)
        out, argmax = ops.maxpool2d(x, 2)
        assert out.dtype == dtype
        assert ops.maxpool2d_backward(out, argmax, x.shape, 2).dtype == dtype
        assert ops.global_avg_pool(x).dtype == dtype
