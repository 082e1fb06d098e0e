"""Forward convolution, activation and MLP kernels.

All convolutions are stride 1 with zero padding. A depthwise-separable
convolution is a per-channel k x k depthwise pass followed by a 1x1
pointwise pass; only the pointwise pass carries a bias.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ShapeError
from .tensor import as_tensor, pad2d

ACTIVATIONS = ("sigmoid", "tanh", "relu", "leaky_relu")
LEAKY_SLOPE = 0.2
MLP_RATIO = 8
MLP_MIN_HIDDEN = 4


@dataclass(frozen=True)
class ConvParams:
    kernel: np.ndarray  # (c_out, c_in, k, k)
    bias: np.ndarray | None = None
    padding: int | None = None  # None means "same": (k - 1) // 2

    def __post_init__(self):
        if self.kernel.ndim != 4 or self.kernel.shape[2] != self.kernel.shape[3]:
            raise ShapeError(f"conv kernel must be (c_out, c_in, k, k), got {self.kernel.shape}")
        if self.bias is not None and self.bias.shape != (self.kernel.shape[0],):
            raise ShapeError(f"bias shape {self.bias.shape} does not match {self.kernel.shape[0]} outputs")

    @property
    def pad(self):
        return (self.kernel.shape[2] - 1) // 2 if self.padding is None else self.padding


@dataclass(frozen=True)
class DsConvParams:
    depthwise: np.ndarray  # (c_in, 1, k, k)
    pointwise: np.ndarray  # (c_out, c_in, 1, 1)
    pointwise_bias: np.ndarray  # (c_out,)

    def __post_init__(self):
        dw, pw = self.depthwise, self.pointwise
        if dw.ndim != 4 or dw.shape[1] != 1 or dw.shape[2] != dw.shape[3]:
            raise ShapeError(f"depthwise kernel must be (c_in, 1, k, k), got {dw.shape}")
        if pw.ndim != 4 or pw.shape[2:] != (1, 1) or pw.shape[1] != dw.shape[0]:
            raise ShapeError(f"pointwise kernel {pw.shape} does not follow depthwise {dw.shape}")
        if self.pointwise_bias.shape != (pw.shape[0],):
            raise ShapeError("pointwise bias must have one entry per output channel")


def conv2d(x, p):
    x = as_tensor(x, "input")
    if x.shape[0] != p.kernel.shape[1]:
        raise ShapeError(f"input has {x.shape[0]} channels, kernel expects {p.kernel.shape[1]}")
    out = kernels.conv2d_forward(pad2d(x, p.pad), p.kernel)
    if p.bias is not None:
        out += p.bias.astype(out.dtype)[:, None, None]
    return out


def depthwise_conv2d(x, kernel, padding=None):
    """One k x k filter per channel; ``kernel`` is (c, 1, k, k)."""
    x = as_tensor(x, "input")
    if kernel.ndim != 4 or kernel.shape[1] != 1:
        raise ShapeError(f"depthwise kernel must be (c, 1, k, k), got {kernel.shape}")
    if kernel.shape[0] != x.shape[0]:
        raise ShapeError(f"{kernel.shape[0]} depthwise filters for {x.shape[0]} channels")
    k = kernel.shape[2]
    pad = (k - 1) // 2 if padding is None else padding
    return kernels.depthwise_forward(pad2d(x, pad), kernel[:, 0])


def pointwise_conv2d(x, kernel, bias=None):
    return conv2d(x, ConvParams(kernel, bias, padding=0))


def dsconv2d(x, p):
    return pointwise_conv2d(depthwise_conv2d(x, p.depthwise), p.pointwise, p.pointwise_bias)


def sigmoid(x):
    x = np.asarray(x)
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    s = np.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(x.dtype, copy=False)
    if s.dtype.kind != "f":
        return s
    # rounding would otherwise saturate to exactly 0 or 1 for large |x|;
    # keep the result inside the open interval
    tiny = np.finfo(s.dtype).smallest_subnormal
    return np.clip(s, tiny, np.nextafter(s.dtype.type(1), s.dtype.type(0)))


def activation(t, kind):
    """Elementwise activation; works on arrays of any rank."""
    t = np.asarray(t)
    if kind == "sigmoid":
        return sigmoid(t)
    if kind == "tanh":
        return np.tanh(t)
    if kind == "relu":
        return np.maximum(t, 0).astype(t.dtype, copy=False)
    if kind == "leaky_relu":
        return np.where(t >= 0, t, LEAKY_SLOPE * t).astype(t.dtype, copy=False)
    raise ValueError(f"unknown activation {kind!r}")


def mlp_hidden(c, ratio=MLP_RATIO):
    return max(c // ratio, MLP_MIN_HIDDEN)


def mlp_bottleneck(v, w0, w1):
    """Shared two-layer MLP without biases: ``w1 @ relu(w0 @ v)``."""
    v = np.asarray(v)
    if v.ndim != 1 or w0.ndim != 2 or w1.ndim != 2:
        raise ShapeError("mlp expects a vector and two matrices")
    if w0.shape[1] != v.shape[0] or w1.shape[1] != w0.shape[0] or w1.shape[0] != v.shape[0]:
        raise ShapeError(f"mlp shapes do not chain: v{v.shape}, w0{w0.shape}, w1{w1.shape}")
    return w1 @ np.maximum(w0 @ v, 0)


def conv7x7_2to1(stack, kernel, bias=0.0):
    stack = as_tensor(stack, "stack")
    if stack.shape[0] != 2:
        raise ShapeError(f"spatial attention conv takes 2 channels, got {stack.shape[0]}")
    if kernel.shape != (1, 2, 7, 7):
        raise ShapeError(f"spatial kernel must be (1, 2, 7, 7), got {kernel.shape}")
    return conv2d(stack, ConvParams(kernel, np.array([bias], dtype=stack.dtype), padding=3))
