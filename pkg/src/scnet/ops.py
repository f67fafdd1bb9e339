"""Dense tensor ops: forward passes and their analytic gradients.

Values are contiguous row-major numpy arrays in NCHW order, float32 for
training and float64 for gradient checking. Every public op verifies
that its result is finite; NaN/Inf raises instead of propagating.

Convolution is cross-correlation (no kernel flip), built as im2col +
GEMM; the gather/scatter halves live in the kernel backend, the GEMM in
BLAS. Backward passes recompute the patch matrix from the saved layer
input rather than caching it, trading one extra gather for a much
smaller activation cache.
"""

import numpy as np

from . import backend as K
from .errors import NumericsError, ShapeError

FLOAT_DTYPES = (np.float32, np.float64)


def check_finite(name, arr):
    if not np.isfinite(arr).all():
        raise NumericsError(f"{name} produced non-finite values")


def _as_f(name, arr, ndim=None):
    arr = np.ascontiguousarray(arr)
    if arr.dtype not in FLOAT_DTYPES:
        arr = arr.astype(np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-d, got shape {arr.shape}")
    return arr


def conv_out_hw(h, w, kh, kw, stride, pad):
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if pad < 0:
        raise ShapeError(f"pad must be >= 0, got {pad}")
    if kh > h + 2 * pad or kw > w + 2 * pad:
        raise ShapeError(
            f"kernel {kh}x{kw} exceeds padded input {h + 2 * pad}x{w + 2 * pad}")
    return (h + 2 * pad - kh) // stride + 1, (w + 2 * pad - kw) // stride + 1


def conv2d(x, w, b, stride=1, pad=0):
    """Cross-correlate (N,C,H,W) with (K,C,kh,kw) filters plus bias (K,)."""
    x = _as_f("conv2d input", x, 4)
    w = _as_f("conv2d weight", w, 4)
    b = _as_f("conv2d bias", b, 1)
    n, c, h, wid = x.shape
    k, cw, kh, kw = w.shape
    if cw != c:
        raise ShapeError(
            f"conv2d: weight expects {cw} input channels, input has {c}")
    if b.shape[0] != k:
        raise ShapeError(f"conv2d: bias has {b.shape[0]} entries for {k} filters")
    oh, ow = conv_out_hw(h, wid, kh, kw, stride, pad)

    col = K.im2col(x, kh, kw, stride, pad)
    y = col @ w.reshape(k, -1).T + b
    y = np.ascontiguousarray(y.reshape(n, oh, ow, k).transpose(0, 3, 1, 2))
    check_finite("conv2d", y)
    return y


def conv2d_backward(dy, x, w, stride=1, pad=0):
    """Gradients of conv2d w.r.t. input, weight and bias."""
    x = _as_f("conv2d input", x, 4)
    w = _as_f("conv2d weight", w, 4)
    dy = _as_f("conv2d output grad", dy, 4)
    n = x.shape[0]
    k, _, kh, kw = w.shape
    oh, ow = dy.shape[2], dy.shape[3]

    dy_rows = dy.transpose(0, 2, 3, 1).reshape(n * oh * ow, k)
    col = K.im2col(x, kh, kw, stride, pad)
    db = dy_rows.sum(axis=0)
    dw = (dy_rows.T @ col).reshape(w.shape)
    dcol = np.ascontiguousarray(dy_rows @ w.reshape(k, -1))
    dx = K.col2im(dcol, x.shape, kh, kw, stride, pad)
    check_finite("conv2d_backward", dx)
    return dx, dw, db


def maxpool2d(x, k, stride=None):
    """Max over k x k windows; stride defaults to the window size."""
    x = _as_f("maxpool2d input", x, 4)
    stride = k if stride is None else stride
    h, w = x.shape[2], x.shape[3]
    if k > h or k > w:
        raise ShapeError(f"maxpool2d: window {k} exceeds input {h}x{w}")
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    y, argmax = K.maxpool_forward(x, k, stride)
    check_finite("maxpool2d", y)
    return y, argmax


def maxpool2d_backward(dy, argmax, x_shape, k, stride=None):
    stride = k if stride is None else stride
    dy = _as_f("maxpool2d output grad", dy, 4)
    dx = K.maxpool_backward(dy, argmax, x_shape, k, stride)
    check_finite("maxpool2d_backward", dx)
    return dx


def relu(x):
    x = _as_f("relu input", x)
    y = np.maximum(x, 0)
    check_finite("relu", y)
    return y


def relu_backward(dy, x):
    return np.where(x > 0, dy, 0).astype(dy.dtype)


def affine(x, w, b):
    """x (N,D) times w (D,M) plus b (M,)."""
    x = _as_f("affine input", x, 2)
    w = _as_f("affine weight", w, 2)
    b = _as_f("affine bias", b, 1)
    if x.shape[1] != w.shape[0]:
        raise ShapeError(
            f"affine: input features {x.shape[1]} != weight rows {w.shape[0]}")
    if b.shape[0] != w.shape[1]:
        raise ShapeError(
            f"affine: bias size {b.shape[0]} != weight cols {w.shape[1]}")
    y = x @ w + b
    check_finite("affine", y)
    return y


def affine_backward(dy, x, w):
    dx = dy @ w.T
    dw = x.T @ dy
    db = dy.sum(axis=0)
    check_finite("affine_backward", dx)
    return dx, dw, db


def global_avg_pool(x):
    """Mean over the spatial dims: (N,C,H,W) -> (N,C)."""
    x = _as_f("global_avg_pool input", x, 4)
    y = x.mean(axis=(2, 3))
    check_finite("global_avg_pool", y)
    return y


def global_avg_pool_backward(dy, x_shape):
    n, c, h, w = x_shape
    scale = np.asarray(1.0 / (h * w), dtype=dy.dtype)
    return np.broadcast_to((dy * scale)[:, :, None, None],
                           (n, c, h, w)).copy()
