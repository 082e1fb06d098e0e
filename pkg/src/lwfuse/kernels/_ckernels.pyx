# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled convolution kernels.

Same contracts as ``_reference``. Per output pixel the accumulation order is
fixed: input channels outermost, kernel taps row-major inside, so results do
not depend on the thread count.
"""

import numpy as np
from cython.parallel cimport parallel, prange
from libc.stdlib cimport free, malloc

ctypedef fused real:
    float
    double


def conv2d_forward(real[:, :, ::1] xp, real[:, :, :, ::1] w):
    cdef Py_ssize_t n_out = w.shape[0], n_in = w.shape[1], k = w.shape[2]
    cdef Py_ssize_t h = xp.shape[1] - k + 1, wd = xp.shape[2] - k + 1
    out_arr = np.zeros((n_out, h, wd), dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, ::1] out = out_arr
    # output channels in blocks of 4 so each input load feeds 4 accumulators
    cdef Py_ssize_t n_blocks = (n_out + 3) // 4
    cdef Py_ssize_t b, o, o0, y, c, i, j, x
    cdef real w0, w1, w2, w3, v
    cdef real* r0
    cdef real* r1
    cdef real* r2
    cdef real* r3
    cdef real* irow
    with nogil:
        for b in prange(n_blocks, schedule="static"):
            o0 = 4 * b
            if o0 + 4 <= n_out:
                for y in range(h):
                    r0 = &out[o0, y, 0]
                    r1 = &out[o0 + 1, y, 0]
                    r2 = &out[o0 + 2, y, 0]
                    r3 = &out[o0 + 3, y, 0]
                    for c in range(n_in):
                        for i in range(k):
                            for j in range(k):
                                w0 = w[o0, c, i, j]
                                w1 = w[o0 + 1, c, i, j]
                                w2 = w[o0 + 2, c, i, j]
                                w3 = w[o0 + 3, c, i, j]
                                irow = &xp[c, y + i, j]
                                for x in range(wd):
                                    v = irow[x]
                                    r0[x] = r0[x] + w0 * v
                                    r1[x] = r1[x] + w1 * v
                                    r2[x] = r2[x] + w2 * v
                                    r3[x] = r3[x] + w3 * v
            else:
                for o in range(o0, n_out):
                    for y in range(h):
                        r0 = &out[o, y, 0]
                        for c in range(n_in):
                            for i in range(k):
                                for j in range(k):
                                    w0 = w[o, c, i, j]
                                    irow = &xp[c, y + i, j]
                                    for x in range(wd):
                                        r0[x] = r0[x] + w0 * irow[x]
    return out_arr


def conv2d_grad_input(real[:, :, ::1] gout, real[:, :, :, ::1] w, padded_shape):
    cdef Py_ssize_t n_out = w.shape[0], n_in = w.shape[1], k = w.shape[2]
    cdef Py_ssize_t h = gout.shape[1], wd = gout.shape[2]
    gx_arr = np.zeros(padded_shape, dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t o, y, c, i, j, x
    cdef real wv
    cdef real* grow
    cdef real* xrow
    with nogil:
        for c in prange(n_in, schedule="static"):
            for o in range(n_out):
                for i in range(k):
                    for j in range(k):
                        wv = w[o, c, i, j]
                        for y in range(h):
                            grow = &gout[o, y, 0]
                            xrow = &gx[c, y + i, j]
                            for x in range(wd):
                                xrow[x] = xrow[x] + wv * grow[x]
    return gx_arr


def conv2d_grad_weight(real[:, :, ::1] xp, real[:, :, ::1] gout, Py_ssize_t k):
    cdef Py_ssize_t n_out = gout.shape[0], n_in = xp.shape[0]
    cdef Py_ssize_t h = gout.shape[1], wd = gout.shape[2]
    gw_arr = np.zeros((n_out, n_in, k, k), dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, :, ::1] gw = gw_arr
    cdef Py_ssize_t o, y, c, i, j, x
    cdef double acc
    cdef real* grow
    cdef real* xrow
    cdef real* col
    # sum over rows into a per-column buffer (vectorizes), then over columns
    with nogil, parallel():
        col = <real*>malloc(wd * sizeof(real))
        for o in prange(n_out, schedule="static"):
            for c in range(n_in):
                for i in range(k):
                    for j in range(k):
                        for x in range(wd):
                            col[x] = 0
                        for y in range(h):
                            grow = &gout[o, y, 0]
                            xrow = &xp[c, y + i, j]
                            for x in range(wd):
                                col[x] = col[x] + grow[x] * xrow[x]
                        acc = 0.0
                        for x in range(wd):
                            acc = acc + col[x]
                        gw[o, c, i, j] = <real>acc
        free(col)
    return gw_arr


def depthwise_forward(real[:, :, ::1] xp, real[:, :, ::1] w):
    cdef Py_ssize_t n = w.shape[0], k = w.shape[1]
    cdef Py_ssize_t h = xp.shape[1] - k + 1, wd = xp.shape[2] - k + 1
    out_arr = np.zeros((n, h, wd), dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, ::1] out = out_arr
    cdef Py_ssize_t c, y, i, j, x
    cdef real wv
    cdef real* orow
    cdef real* irow
    with nogil:
        for c in prange(n, schedule="static"):
            for y in range(h):
                orow = &out[c, y, 0]
                for i in range(k):
                    for j in range(k):
                        wv = w[c, i, j]
                        irow = &xp[c, y + i, j]
                        for x in range(wd):
                            orow[x] = orow[x] + wv * irow[x]
    return out_arr


def depthwise_grad_input(real[:, :, ::1] gout, real[:, :, ::1] w, padded_shape):
    cdef Py_ssize_t n = w.shape[0], k = w.shape[1]
    cdef Py_ssize_t h = gout.shape[1], wd = gout.shape[2]
    gx_arr = np.zeros(padded_shape, dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t c, y, i, j, x
    cdef real wv
    cdef real* grow
    cdef real* xrow
    with nogil:
        for c in prange(n, schedule="static"):
            for i in range(k):
                for j in range(k):
                    wv = w[c, i, j]
                    for y in range(h):
                        grow = &gout[c, y, 0]
                        xrow = &gx[c, y + i, j]
                        for x in range(wd):
                            xrow[x] = xrow[x] + wv * grow[x]
    return gx_arr


def depthwise_grad_weight(real[:, :, ::1] xp, real[:, :, ::1] gout, Py_ssize_t k):
    cdef Py_ssize_t n = gout.shape[0], h = gout.shape[1], wd = gout.shape[2]
    gw_arr = np.zeros((n, k, k), dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, ::1] gw = gw_arr
    cdef Py_ssize_t c, y, i, j, x
    cdef double acc
    cdef real* grow
    cdef real* xrow
    cdef real* col
    with nogil, parallel():
        col = <real*>malloc(wd * sizeof(real))
        for c in prange(n, schedule="static"):
            for i in range(k):
                for j in range(k):
                    for x in range(wd):
                        col[x] = 0
                    for y in range(h):
                        grow = &gout[c, y, 0]
                        xrow = &xp[c, y + i, j]
                        for x in range(wd):
                            col[x] = col[x] + grow[x] * xrow[x]
                    acc = 0.0
                    for x in range(wd):
                        acc = acc + col[x]
                    gw[c, i, j] = <real>acc
        free(col)
    return gw_arr
