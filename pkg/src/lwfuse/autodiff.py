"""Tape-based reverse-mode differentiation for the fusion network.

A :class:`Tape` records every op applied to its :class:`Var` values. Forward
values are computed with the same kernels as plain inference; each recorded
op stores a closure mapping its output gradient to input gradients.

    tape = Tape()
    x = tape.param("x", array)
    loss = total(activation(x, "tanh"))
    grads = tape.backward(loss)        # {"x": d loss / d x}
"""

import numpy as np

from . import kernels, nn
from .errors import ShapeError, TapeError
from .tensor import as_tensor, pad2d


class Var:
    __slots__ = ("value", "tape", "name")

    def __init__(self, value, tape, name=None):
        self.value = value
        self.tape = tape
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var({self.name or 'node'}, shape={self.value.shape})"


class Tape:
    def __init__(self):
        self._nodes = []  # (output, parents, backward_fn)
        self._recorded = set()
        self._params = {}

    def param(self, name, value):
        """Register a trainable leaf under ``name``."""
        if name in self._params:
            raise TapeError(f"parameter {name!r} registered twice")
        v = Var(np.asarray(value), self, name)
        self._params[name] = v
        return v

    def constant(self, value):
        return Var(np.asarray(value), self)

    def record(self, value, parents, backward):
        out = Var(value, self)
        self._nodes.append((out, parents, backward))
        self._recorded.add(id(out))
        return out

    def needs_grad(self, v):
        return id(v) in self._recorded or v.name in self._params

    @property
    def params(self):
        return dict(self._params)

    def backward(self, out):
        """Gradients of scalar ``out`` for every registered parameter."""
        if not isinstance(out, Var) or out.tape is not self:
            raise TapeError("output was not produced on this tape")
        if id(out) not in self._recorded and out.name not in self._params:
            raise TapeError("output was never recorded")
        if out.value.size != 1:
            raise TapeError(f"backward needs a scalar output, got shape {out.value.shape}")
        grads = {id(out): np.ones_like(out.value)}
        for node, parents, fn in reversed(self._nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            for p, pg in zip(parents, fn(g)):
                if pg is None:
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg
        return {name: grads.get(id(v), np.zeros_like(v.value)) for name, v in self._params.items()}


def _tape_of(*vs):
    tapes = {v.tape for v in vs if isinstance(v, Var)}
    if len(tapes) != 1:
        raise TapeError("operands must come from exactly one tape")
    return tapes.pop()


def _lift(tape, v):
    return v if isinstance(v, Var) else tape.constant(v)


# ---------------------------------------------------------------- convolution

def conv2d(x, kernel, bias=None, padding=None):
    tape = _tape_of(x, kernel, bias)
    x, kernel = _lift(tape, x), _lift(tape, kernel)
    k = kernel.shape[2]
    pad = (k - 1) // 2 if padding is None else padding
    if x.shape[0] != kernel.shape[1]:
        raise ShapeError(f"input has {x.shape[0]} channels, kernel expects {kernel.shape[1]}")
    xp = pad2d(x.value, pad)
    out = kernels.conv2d_forward(xp, kernel.value)
    parents = [x, kernel]
    if bias is not None:
        bias = _lift(tape, bias)
        out += bias.value.astype(out.dtype)[:, None, None]
        parents.append(bias)

    def back(g):
        gx = None
        if tape.needs_grad(x):
            gx = kernels.conv2d_grad_input(g, kernel.value, xp.shape)
            if pad:
                gx = gx[:, pad:-pad, pad:-pad]
        grads = [gx, kernels.conv2d_grad_weight(xp, g, k)]
        if bias is not None:
            grads.append(g.sum(axis=(1, 2)))
        return grads

    return tape.record(out, parents, back)


def depthwise_conv2d(x, kernel, padding=None):
    tape = _tape_of(x, kernel)
    x, kernel = _lift(tape, x), _lift(tape, kernel)
    if kernel.shape[1] != 1 or kernel.shape[0] != x.shape[0]:
        raise ShapeError(f"depthwise kernel {kernel.shape} does not fit {x.shape[0]} channels")
    k = kernel.shape[2]
    pad = (k - 1) // 2 if padding is None else padding
    xp = pad2d(x.value, pad)
    out = kernels.depthwise_forward(xp, kernel.value[:, 0])

    def back(g):
        gx = kernels.depthwise_grad_input(g, kernel.value[:, 0], xp.shape)
        if pad:
            gx = gx[:, pad:-pad, pad:-pad]
        return gx, kernels.depthwise_grad_weight(xp, g, k)[:, None]

    return tape.record(out, (x, kernel), back)


def pointwise_conv2d(x, kernel, bias=None):
    return conv2d(x, kernel, bias, padding=0)


def dsconv2d(x, depthwise, pointwise, bias):
    return pointwise_conv2d(depthwise_conv2d(x, depthwise), pointwise, bias)


def conv7x7_2to1(stack, kernel, bias):
    if stack.shape[0] != 2:
        raise ShapeError(f"spatial attention conv takes 2 channels, got {stack.shape[0]}")
    return conv2d(stack, kernel, bias, padding=3)


# ---------------------------------------------------------------- elementwise

def activation(x, kind):
    tape = _tape_of(x)
    v = x.value
    y = nn.activation(v, kind)
    if kind == "sigmoid":
        d = y * (1 - y)
    elif kind == "tanh":
        d = 1 - y * y
    elif kind == "relu":
        d = (v > 0).astype(v.dtype)
    else:
        d = np.where(v >= 0, 1, nn.LEAKY_SLOPE).astype(v.dtype)
    return tape.record(y, (x,), lambda g: (g * d,))


def add(a, b):
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch {a.shape} vs {b.shape}")
    return tape.record(a.value + b.value, (a, b), lambda g: (g, g))


def affine(x, scale, shift):
    tape = _tape_of(x)
    dt = x.value.dtype.type
    return tape.record(x.value * dt(scale) + dt(shift), (x,), lambda g: (g * dt(scale),))


def total(x):
    tape = _tape_of(x)
    return tape.record(np.asarray(x.value.sum()), (x,), lambda g: (np.full_like(x.value, g),))


def weighted_sum(x, weights):
    """Scalar ``sum(x * weights)`` with constant weights: projects a tensor to a loss."""
    tape = _tape_of(x)
    w = np.asarray(weights, dtype=x.value.dtype)
    return tape.record(np.asarray((x.value * w).sum()), (x,), lambda g: (g * w,))


def scale(x, s):
    return affine(x, s, 0.0)


# ---------------------------------------------------------------- structure

def concat_channels(*parts):
    tape = _tape_of(*parts)
    parts = [_lift(tape, p) for p in parts]
    hw = parts[0].shape[1:]
    if any(p.shape[1:] != hw for p in parts):
        raise ShapeError("spatial mismatch in concat")
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])
    out = np.concatenate([p.value for p in parts], axis=0)
    return tape.record(out, tuple(parts),
                       lambda g: [g[bounds[i]:bounds[i + 1]] for i in range(len(parts))])


def reduce_spatial(x, mode):
    tape = _tape_of(x)
    c, h, w = x.shape
    flat = x.value.reshape(c, -1)
    if mode == "mean":
        out = flat.mean(axis=1, dtype=flat.dtype)
        return tape.record(out, (x,), lambda g: (np.broadcast_to((g / (h * w))[:, None, None], x.shape).copy(),))
    if mode == "max":
        idx = flat.argmax(axis=1)
        out = flat[np.arange(c), idx]

        def back(g):
            gx = np.zeros_like(flat)
            gx[np.arange(c), idx] = g
            return (gx.reshape(x.shape),)

        return tape.record(out, (x,), back)
    raise ValueError(f"unknown reduction {mode!r}")


def reduce_channels(x, mode):
    tape = _tape_of(x)
    c = x.shape[0]
    v = x.value
    if mode == "mean":
        out = v.mean(axis=0, keepdims=True, dtype=v.dtype)
        return tape.record(out, (x,), lambda g: (np.broadcast_to(g / c, v.shape).copy(),))
    if mode == "max":
        idx = v.argmax(axis=0)
        out = np.take_along_axis(v, idx[None], axis=0)

        def back(g):
            gx = np.zeros_like(v)
            np.put_along_axis(gx, idx[None], g, axis=0)
            return (gx,)

        return tape.record(out, (x,), back)
    raise ValueError(f"unknown reduction {mode!r}")


def scale_channels(x, vec):
    """``x[i] * vec[i]`` for every channel i."""
    tape = _tape_of(x, vec)
    x, vec = _lift(tape, x), _lift(tape, vec)
    out = x.value * vec.value[:, None, None]
    return tape.record(out, (x, vec),
                       lambda g: (g * vec.value[:, None, None], (g * x.value).sum(axis=(1, 2))))


def scale_spatial(x, smap):
    """``x[i, y, x] * smap[0, y, x]``."""
    tape = _tape_of(x, smap)
    x, smap = _lift(tape, x), _lift(tape, smap)
    out = x.value * smap.value
    return tape.record(out, (x, smap),
                       lambda g: (g * smap.value, (g * x.value).sum(axis=0, keepdims=True)))


def matvec(w, v):
    tape = _tape_of(w, v)
    w, v = _lift(tape, w), _lift(tape, v)
    if w.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec shape mismatch {w.shape} @ {v.shape}")
    return tape.record(w.value @ v.value, (w, v),
                       lambda g: (np.outer(g, v.value), w.value.T @ g))


def mlp_bottleneck(v, w0, w1):
    return matvec(w1, activation(matvec(w0, v), "relu"))


# ---------------------------------------------------------------- attention

def channel_attention(f, w0, w1):
    logits = add(mlp_bottleneck(reduce_spatial(f, "mean"), w0, w1),
                 mlp_bottleneck(reduce_spatial(f, "max"), w0, w1))
    mc = activation(logits, "sigmoid")
    return mc, scale_channels(f, mc)


def spatial_attention(f_prime, spatial_kernel, spatial_bias):
    stack = concat_channels(reduce_channels(f_prime, "mean"), reduce_channels(f_prime, "max"))
    ms = activation(conv7x7_2to1(stack, spatial_kernel, spatial_bias), "sigmoid")
    return ms, scale_spatial(f_prime, ms)


def cbam(f, w0, w1, spatial_kernel, spatial_bias):
    _, f_prime = channel_attention(f, w0, w1)
    _, f_double_prime = spatial_attention(f_prime, spatial_kernel, spatial_bias)
    return f_double_prime


# ---------------------------------------------------------------- loss

def _grad_l1(img):
    """|dx| + |dy| forward differences on the (h-1, w-1) grid, with the pieces."""
    dx = img[:, :-1, 1:] - img[:, :-1, :-1]
    dy = img[:, 1:, :-1] - img[:, :-1, :-1]
    return np.abs(dx) + np.abs(dy), dx, dy


GRADIENT_WEIGHT = 10.0


def fusion_loss_value(fused, ir, vi):
    fused, ir, vi = (as_tensor(t) for t in (fused, ir, vi))
    if not (fused.shape == ir.shape == vi.shape):
        raise ShapeError(f"fusion_loss needs equal shapes, got {fused.shape}, {ir.shape}, {vi.shape}")
    target = np.maximum(ir, vi)
    gt = np.maximum(_grad_l1(ir)[0], _grad_l1(vi)[0])
    gf = _grad_l1(fused)[0]
    intensity = np.abs(fused - target).mean(dtype=np.float64)
    texture = np.abs(gf - gt).mean(dtype=np.float64) if gf.size else 0.0
    return float(intensity + GRADIENT_WEIGHT * texture)


def fusion_loss(fused, ir, vi):
    """Traced version of :func:`fusion_loss_value`; ``ir`` and ``vi`` are constants."""
    tape = _tape_of(fused)
    f = fused.value
    ir = np.asarray(ir, dtype=f.dtype)
    vi = np.asarray(vi, dtype=f.dtype)
    value = fusion_loss_value(f, ir, vi)
    target = np.maximum(ir, vi)
    gt = np.maximum(_grad_l1(ir)[0], _grad_l1(vi)[0])
    gf, dx, dy = _grad_l1(f)

    def back(g):
        g = float(g)
        out = np.sign(f - target) * (g / f.size)
        if gf.size:
            s = np.sign(gf - gt) * (g * GRADIENT_WEIGHT / gf.size)
            a = s * np.sign(dx)
            b = s * np.sign(dy)
            out[:, :-1, 1:] += a
            out[:, 1:, :-1] += b
            out[:, :-1, :-1] -= a + b
        return (out.astype(f.dtype),)

    return tape.record(np.asarray(value, dtype=np.float64), (fused,), back)


class TracedOps:
    """Op set for :func:`lwfuse.generator.run_network` that records onto a tape."""

    @staticmethod
    def conv(x, kernel, bias):
        return conv2d(x, kernel, bias)

    @staticmethod
    def dsconv(x, depthwise, pointwise, bias):
        return dsconv2d(x, depthwise, pointwise, bias)

    @staticmethod
    def act(x, kind):
        return activation(x, kind)

    @staticmethod
    def concat(parts):
        return concat_channels(*parts)

    @staticmethod
    def cbam(x, w0, w1, spatial_kernel, spatial_bias):
        return cbam(x, w0, w1, spatial_kernel, spatial_bias)

    @staticmethod
    def affine(x, s, b):
        return affine(x, s, b)


def trace_generator(tape, weights, ir, vi):
    """Register every generator tensor on ``tape`` as ``layer.key`` and run the network."""
    from .generator import run_network

    ir = as_tensor(ir, "ir")
    vi = as_tensor(vi, "vi")
    if ir.shape != vi.shape:
        raise ShapeError("ir and vi shapes differ")
    params = {}
    for name, t in weights.named_tensors():
        params[name] = tape.param(name, t)
    x = tape.constant(np.concatenate([ir, vi], axis=0).astype(next(iter(params.values())).value.dtype))
    return run_network(weights, x, TracedOps, lambda layer, key: params[f"{layer}.{key}"])
