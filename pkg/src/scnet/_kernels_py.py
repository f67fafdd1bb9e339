"""Pure-numpy kernels: patch gather/scatter and max pooling.

Mirrors the interface of the compiled extension in _kernels.pyx; used
when the extension is unavailable or explicitly selected via
SCNET_BACKEND=numpy.
"""

import numpy as np


def im2col(x, kh, kw, stride, pad):
    """Unfold (N,C,H,W) into a (N*OH*OW, C*kh*kw) patch matrix."""
    n, c, h, w = x.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    if pad > 0:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    col = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        i_max = i + oh * stride
        for j in range(kw):
            j_max = j + ow * stride
            col[:, :, i, j] = x[:, :, i:i_max:stride, j:j_max:stride]
    return np.ascontiguousarray(col.transpose(0, 4, 5, 1, 2, 3)).reshape(
        n * oh * ow, c * kh * kw)


def col2im(col, x_shape, kh, kw, stride, pad):
    """Fold a patch matrix back onto (N,C,H,W), accumulating overlaps."""
    n, c, h, w = x_shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    col = col.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    img = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=col.dtype)
    for i in range(kh):
        i_max = i + oh * stride
        for j in range(kw):
            j_max = j + ow * stride
            img[:, :, i:i_max:stride, j:j_max:stride] += col[:, :, i, j]
    if pad > 0:
        return np.ascontiguousarray(img[:, :, pad:pad + h, pad:pad + w])
    return img


def maxpool_forward(x, k, stride):
    """Pool (N,C,H,W) with a k x k window.

    Returns (out, argmax) where argmax holds the within-window index of
    each maximum, shaped (N*OH*OW, C), for use by maxpool_backward.
    First maximum wins on ties.
    """
    n, c, h, w = x.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    col = im2col(x, k, k, stride, 0).reshape(n * oh * ow, c, k * k)
    argmax = col.argmax(axis=2)
    out = np.take_along_axis(col, argmax[:, :, None], axis=2)[:, :, 0]
    out = np.ascontiguousarray(
        out.reshape(n, oh, ow, c).transpose(0, 3, 1, 2))
    return out, argmax.astype(np.int64)


def maxpool_backward(dy, argmax, x_shape, k, stride):
    """Scatter upstream gradients back to the maxima positions."""
    n, c, h, w = x_shape
    oh, ow = dy.shape[2], dy.shape[3]
    dcol = np.zeros((n * oh * ow, c, k * k), dtype=dy.dtype)
    dy_rows = dy.transpose(0, 2, 3, 1).reshape(n * oh * ow, c)
    np.put_along_axis(dcol, argmax[:, :, None], dy_rows[:, :, None], axis=2)
    return col2im(dcol.reshape(n * oh * ow, c * k * k), x_shape, k, k,
                  stride, 0)
