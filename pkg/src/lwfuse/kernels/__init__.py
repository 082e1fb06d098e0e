"""Convolution kernel dispatch.

The compiled Cython extension is used when it was built; otherwise the numpy
implementations in ``_reference`` take over. Set ``LWFUSE_KERNELS=python`` to
force the fallback, or call :func:`use_backend` at runtime.
"""

import os

import numpy as np

from . import _reference

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = ("compiled", "python")


def available_backends():
    return BACKENDS if _ckernels is not None else ("python",)


def use_backend(name):
    """Select ``compiled``, ``python`` or ``auto``; returns the active name."""
    global _impl, backend
    if name == "auto":
        name = "compiled" if _ckernels is not None else "python"
    if name == "compiled":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        _impl = _ckernels
    elif name == "python":
        _impl = _reference
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    backend = name
    return name


_impl = _reference
backend = "python"
use_backend(os.environ.get("LWFUSE_KERNELS", "auto"))


def _c(a, dtype):
    return np.ascontiguousarray(a, dtype=dtype)


def conv2d_forward(xp, w):
    return _impl.conv2d_forward(_c(xp, xp.dtype), _c(w, xp.dtype))


def conv2d_grad_input(gout, w, padded_shape):
    return _impl.conv2d_grad_input(_c(gout, gout.dtype), _c(w, gout.dtype), tuple(padded_shape))


def conv2d_grad_weight(xp, gout, k):
    return _impl.conv2d_grad_weight(_c(xp, gout.dtype), _c(gout, gout.dtype), int(k))


def depthwise_forward(xp, w):
    """``w`` has shape (c, k, k): one filter per channel."""
    return _impl.depthwise_forward(_c(xp, xp.dtype), _c(w, xp.dtype))


def depthwise_grad_input(gout, w, padded_shape):
    return _impl.depthwise_grad_input(_c(gout, gout.dtype), _c(w, gout.dtype), tuple(padded_shape))


def depthwise_grad_weight(xp, gout, k):
    return _impl.depthwise_grad_weight(_c(xp, gout.dtype), _c(gout, gout.dtype), int(k))
