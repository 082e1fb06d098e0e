"""CBAM: channel attention followed by spatial attention."""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .nn import conv7x7_2to1, mlp_bottleneck, mlp_hidden, sigmoid
from .tensor import as_tensor, concat_channels, reduce_channels, reduce_spatial


@dataclass(frozen=True)
class CbamParams:
    w0: np.ndarray  # (hidden, c)
    w1: np.ndarray  # (c, hidden)
    spatial_kernel: np.ndarray  # (1, 2, 7, 7)
    spatial_bias: float = 0.0

    def __post_init__(self):
        if self.w0.ndim != 2 or self.w1.shape != self.w0.shape[::-1]:
            raise ShapeError(f"w0 {self.w0.shape} and w1 {self.w1.shape} must be transposed shapes")
        if self.spatial_kernel.shape != (1, 2, 7, 7):
            raise ShapeError("spatial kernel must be (1, 2, 7, 7)")

    @property
    def channels(self):
        return self.w0.shape[1]

    @classmethod
    def random(cls, c, rng, dtype=np.float32):
        hidden = mlp_hidden(c)

        def he(shape, fan_in):
            bound = np.sqrt(6.0 / fan_in)
            return rng.uniform(-bound, bound, size=shape).astype(dtype)

        return cls(he((hidden, c), c), he((c, hidden), hidden), he((1, 2, 7, 7), 98), 0.0)

    @classmethod
    def zeros(cls, c, dtype=np.float32):
        hidden = mlp_hidden(c)
        return cls(np.zeros((hidden, c), dtype), np.zeros((c, hidden), dtype),
                   np.zeros((1, 2, 7, 7), dtype), 0.0)

    @classmethod
    def identity_mlp(cls, c, spatial_kernel=None, spatial_bias=0.0, dtype=np.float32):
        """Test mode: reduction ratio 1 with identity MLP weights."""
        if spatial_kernel is None:
            spatial_kernel = np.zeros((1, 2, 7, 7), dtype)
        eye = np.eye(c, dtype=dtype)
        return cls(eye, eye.copy(), spatial_kernel, spatial_bias)


@dataclass(frozen=True)
class CbamTrace:
    mc: np.ndarray  # (c,) channel weights
    ms: np.ndarray  # (1, h, w) spatial weights
    f_prime: np.ndarray
    f_double_prime: np.ndarray


def channel_attention(f, p):
    f = as_tensor(f, "feature")
    if f.shape[0] != p.channels:
        raise ShapeError(f"feature has {f.shape[0]} channels, attention built for {p.channels}")
    w0, w1 = p.w0.astype(f.dtype), p.w1.astype(f.dtype)
    logits = mlp_bottleneck(reduce_spatial(f, "mean"), w0, w1) + mlp_bottleneck(reduce_spatial(f, "max"), w0, w1)
    mc = sigmoid(logits)
    return mc, f * mc[:, None, None]


def spatial_attention(f_prime, p):
    f_prime = as_tensor(f_prime, "feature")
    stack = concat_channels(reduce_channels(f_prime, "mean"), reduce_channels(f_prime, "max"))
    ms = sigmoid(conv7x7_2to1(stack, p.spatial_kernel.astype(f_prime.dtype), p.spatial_bias))
    return ms, f_prime * ms


def cbam(f, p):
    mc, f_prime = channel_attention(f, p)
    ms, f_double_prime = spatial_attention(f_prime, p)
    return CbamTrace(mc, ms, f_prime, f_double_prime)
