# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: patch gather/scatter and max pooling.

Same interface as _kernels_py; these avoid the intermediate copies the
numpy versions need (padding, the big transpose in im2col) by writing
the target layout in a single pass.
"""

import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()

ctypedef fused floating:
    float
    double


def im2col(floating[:, :, :, ::1] x, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - kw) // stride + 1

    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out = np.empty((n * oh * ow, c * kh * kw), dtype=dtype)
    cdef floating[:, ::1] col = out

    cdef Py_ssize_t ni, ci, oi, oj, i, j, hi, wj, row, base
    cdef floating v
    with nogil:
        for ni in range(n):
            for oi in range(oh):
                for oj in range(ow):
                    row = (ni * oh + oi) * ow + oj
                    for ci in range(c):
                        base = ci * kh * kw
                        for i in range(kh):
                            hi = oi * stride + i - pad
                            for j in range(kw):
                                wj = oj * stride + j - pad
                                if 0 <= hi < h and 0 <= wj < w:
                                    v = x[ni, ci, hi, wj]
                                else:
                                    v = 0
                                col[row, base + i * kw + j] = v
    return out


def col2im(floating[:, ::1] col, x_shape, int kh, int kw, int stride,
           int pad):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1]
    cdef Py_ssize_t h = x_shape[2], w = x_shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - kw) // stride + 1

    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out = np.zeros((n, c, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] img = out

    cdef Py_ssize_t ni, ci, oi, oj, i, j, hi, wj, row, base
    with nogil:
        for ni in range(n):
            for oi in range(oh):
                for oj in range(ow):
                    row = (ni * oh + oi) * ow + oj
                    for ci in range(c):
                        base = ci * kh * kw
                        for i in range(kh):
                            hi = oi * stride + i - pad
                            if hi < 0 or hi >= h:
                                continue
                            for j in range(kw):
                                wj = oj * stride + j - pad
                                if 0 <= wj < w:
                                    img[ni, ci, hi, wj] += col[row, base + i * kw + j]
    return out


def maxpool_forward(floating[:, :, :, ::1] x, int k, int stride):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h - k) // stride + 1
    cdef Py_ssize_t ow = (w - k) // stride + 1

    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_arr = np.empty((n, c, oh, ow), dtype=dtype)
    arg_arr = np.empty((n * oh * ow, c), dtype=np.int64)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef cnp.int64_t[:, ::1] argmax = arg_arr

    cdef Py_ssize_t ni, ci, oi, oj, i, j, row, best_idx
    cdef floating best, v
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for oi in range(oh):
                    for oj in range(ow):
                        best = x[ni, ci, oi * stride, oj * stride]
                        best_idx = 0
                        for i in range(k):
                            for j in range(k):
                                v = x[ni, ci, oi * stride + i, oj * stride + j]
                                if v > best:
                                    best = v
                                    best_idx = i * k + j
                        out[ni, ci, oi, oj] = best
                        row = (ni * oh + oi) * ow + oj
                        argmax[row, ci] = best_idx
    return out_arr, arg_arr


def maxpool_backward(floating[:, :, :, ::1] dy, cnp.int64_t[:, ::1] argmax,
                     x_shape, int k, int stride):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1]
    cdef Py_ssize_t h = x_shape[2], w = x_shape[3]
    cdef Py_ssize_t oh = dy.shape[2], ow = dy.shape[3]

    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out = np.zeros((n, c, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] dx = out

    cdef Py_ssize_t ni, ci, oi, oj, row, idx
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for oi in range(oh):
                    for oj in range(ow):
                        row = (ni * oh + oi) * ow + oj
                        idx = argmax[row, ci]
                        dx[ni, ci, oi * stride + idx // k,
                           oj * stride + idx % k] += dy[ni, ci, oi, oj]
    return out
