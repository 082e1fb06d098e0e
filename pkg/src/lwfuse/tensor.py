"""Dense (channels, rows, cols) tensors backed by numpy arrays.

Tensors are plain ``np.ndarray`` objects of rank 3. float32 is the default
element type; float64 is passed through untouched so gradient checks can run
in double precision.
"""

import numpy as np

from .errors import DimensionError, ShapeError

DTYPE = np.float32


def as_tensor(t, name="tensor"):
    t = np.asarray(t)
    if t.ndim != 3:
        raise ShapeError(f"{name} must have rank 3 (c, h, w), got shape {t.shape}")
    if min(t.shape) < 1:
        raise DimensionError(f"{name} has an empty dimension: {t.shape}")
    if t.dtype not in (np.float32, np.float64):
        t = t.astype(DTYPE)
    return t


def tensor_new(shape, fill=0.0, dtype=DTYPE):
    shape = tuple(int(s) for s in shape)
    if len(shape) != 3:
        raise ShapeError(f"shape must be (c, h, w), got {shape}")
    if min(shape) < 1:
        raise DimensionError(f"all dimensions must be >= 1, got {shape}")
    return np.full(shape, fill, dtype=dtype)


def pad2d(t, pad):
    t = as_tensor(t)
    if pad < 0:
        raise ValueError("pad must be non-negative")
    if pad == 0:
        return t
    return np.pad(t, ((0, 0), (pad, pad), (pad, pad)))


def concat_channels(*parts):
    """Stack tensors along the channel axis, in argument order."""
    parts = [as_tensor(p) for p in parts]
    hw = parts[0].shape[1:]
    for p in parts[1:]:
        if p.shape[1:] != hw:
            raise ShapeError(f"spatial mismatch: {hw} vs {p.shape[1:]}")
    return np.concatenate(parts, axis=0)


def reduce_spatial(t, mode):
    """Per-channel mean or max over all pixels; returns a length-c vector."""
    t = as_tensor(t)
    flat = t.reshape(t.shape[0], -1)
    if mode == "mean":
        return flat.mean(axis=1, dtype=t.dtype)
    if mode == "max":
        return flat.max(axis=1)
    raise ValueError(f"unknown reduction {mode!r}")


def reduce_channels(t, mode):
    """Per-pixel mean or max across channels; returns shape (1, h, w)."""
    t = as_tensor(t)
    if mode == "mean":
        return t.mean(axis=0, keepdims=True, dtype=t.dtype)
    if mode == "max":
        return t.max(axis=0, keepdims=True)
    raise ValueError(f"unknown reduction {mode!r}")
