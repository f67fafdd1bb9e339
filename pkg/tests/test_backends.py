"""The compiled kernels and the numpy fallback must agree bit-for-bit
on gathers/scatters (pure data movement) and on pooling argmax
tie-breaks (first maximum wins)."""

import numpy as np
import pytest

from scnet import backend

BACKENDS = backend.get_backends()


def pairs():
    names = sorted(BACKENDS)
    return [(names[0], b) for b in names[1:]]


@pytest.mark.skipif(len(BACKENDS) < 2,
                    reason="compiled extension not built")
class TestBackendEquivalence:
    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_im2col_col2im(self, dtype):
        rng = np.random.default_rng(10)
        for _ in range(20):
            n, c = rng.integers(1, 4, size=2)
            kh, kw = rng.integers(1, 4, size=2)
            stride = int(rng.integers(1, 3))
            pad = int(rng.integers(0, 3))
            h = int(rng.integers(kh, kh + 5))
            w = int(rng.integers(kw, kw + 5))
            x = rng.standard_normal((int(n), int(c), h, w)).astype(dtype)
            cols = {name: impl.im2col(x, int(kh), int(kw), stride, pad)
                    for name, impl in BACKENDS.items()}
            ref = cols.pop("numpy")
            for name, got in cols.items():
                np.testing.assert_array_equal(got, ref, err_msg=name)

            col = rng.standard_normal(ref.shape).astype(dtype)
            imgs = {name: impl.col2im(col, x.shape, int(kh), int(kw), stride,
                                      pad)
                    for name, impl in BACKENDS.items()}
            ref_img = imgs.pop("numpy")
            for name, got in imgs.items():
                np.testing.assert_allclose(got, ref_img, rtol=0, atol=1e-6,
                                           err_msg=name)

    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_maxpool(self, dtype):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n, c = rng.integers(1, 4, size=2)
            k = int(rng.integers(1, 4))
            stride = int(rng.integers(1, 3))
            h = int(rng.integers(k, k + 6))
            w = int(rng.integers(k, k + 6))
            x = rng.standard_normal((int(n), int(c), h, w)).astype(dtype)
            outs = {name: impl.maxpool_forward(x, k, stride)
                    for name, impl in BACKENDS.items()}
            y_ref, arg_ref = outs.pop("numpy")
            for name, (y, arg) in outs.items():
                np.testing.assert_array_equal(y, y_ref, err_msg=name)
                np.testing.assert_array_equal(arg, arg_ref, err_msg=name)

            dy = rng.standard_normal(y_ref.shape).astype(dtype)
            backs = {name: impl.maxpool_backward(dy, arg_ref, x.shape, k,
                                                 stride)
                     for name, impl in BACKENDS.items()}
            # overlapping windows accumulate in backend-specific order
            ref_dx = backs.pop("numpy")
            for name, got in backs.items():
                np.testing.assert_allclose(got, ref_dx, rtol=0, atol=1e-5,
                                           err_msg=name)

    def test_maxpool_tie_break_first_wins(self):
        x = np.zeros((1, 1, 2, 2), dtype=np.float32)  # all equal: index 0
        for name, impl in BACKENDS.items():
            _, arg = impl.maxpool_forward(x, 2, 2)
            assert arg[0, 0] == 0, name
