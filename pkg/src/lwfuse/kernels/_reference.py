"""numpy implementations of the convolution kernels.

Every function takes an already zero-padded input and performs a "valid"
stride-1 correlation. These are the fallback when the compiled extension is
not built, and the reference the compiled kernels are tested against.
"""

import numpy as np


def _tap_major(w):
    # BLAS needs contiguous (c_out, c_in) blocks; strided slices of w fall
    # back to a slow generic loop
    return np.ascontiguousarray(w.transpose(2, 3, 0, 1))


def conv2d_forward(xp, w):
    n_out, n_in, k, _ = w.shape
    h = xp.shape[1] - k + 1
    wd = xp.shape[2] - k + 1
    taps = _tap_major(w)
    out = np.zeros((n_out, h * wd), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            patch = xp[:, i:i + h, j:j + wd].reshape(n_in, -1)
            out += taps[i, j] @ patch
    return out.reshape(n_out, h, wd)


def conv2d_grad_input(gout, w, padded_shape):
    n_out, n_in, k, _ = w.shape
    _, h, wd = gout.shape
    g = gout.reshape(n_out, -1)
    taps = np.ascontiguousarray(w.transpose(2, 3, 1, 0))
    gx = np.zeros(padded_shape, dtype=gout.dtype)
    for i in range(k):
        for j in range(k):
            gx[:, i:i + h, j:j + wd] += (taps[i, j] @ g).reshape(n_in, h, wd)
    return gx


def conv2d_grad_weight(xp, gout, k):
    n_out, h, wd = gout.shape
    n_in = xp.shape[0]
    g = gout.reshape(n_out, -1)
    gw = np.empty((n_out, n_in, k, k), dtype=gout.dtype)
    for i in range(k):
        for j in range(k):
            gw[:, :, i, j] = g @ xp[:, i:i + h, j:j + wd].reshape(n_in, -1).T
    return gw


def depthwise_forward(xp, w):
    c, k, _ = w.shape
    h = xp.shape[1] - k + 1
    wd = xp.shape[2] - k + 1
    out = np.zeros((c, h, wd), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            out += w[:, i, j, None, None] * xp[:, i:i + h, j:j + wd]
    return out


def depthwise_grad_input(gout, w, padded_shape):
    c, k, _ = w.shape
    _, h, wd = gout.shape
    gx = np.zeros(padded_shape, dtype=gout.dtype)
    for i in range(k):
        for j in range(k):
            gx[:, i:i + h, j:j + wd] += w[:, i, j, None, None] * gout
    return gx


def depthwise_grad_weight(xp, gout, k):
    c, h, wd = gout.shape
    gw = np.empty((c, k, k), dtype=gout.dtype)
    for i in range(k):
        for j in range(k):
            gw[:, i, j] = np.einsum("chw,chw->c", gout, xp[:, i:i + h, j:j + wd])
    return gw
