"""Fusion generator: baseline and lightweight variants, forward pass and cost accounting.

Topology (defaults in brackets)::

    concat(ir, vi)                       2 channels
    stem   3x3 conv -> base_width        [32], always a standard conv
    dense  dense_layers x 3x3 layers     [3], each sees all previous outputs
    block  concat(stem, dense outputs)   [128]
    cbam   optional, once, on the block
    decoder 3x3 layers                   [64, 32, 1], tanh on the last

Every hidden layer is followed by leaky_relu(0.2). The lightweight variants
replace each dense and decoder conv with a depthwise-separable conv.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import attention, nn
from .errors import ConfigError, ShapeError
from .tensor import DTYPE, as_tensor, concat_channels

VARIANTS = ("baseline", "lightweight", "baseline+cbam", "lightweight-cbam")
KERNEL = 3


@dataclass(frozen=True)
class GeneratorConfig:
    variant: str = "lightweight"
    base_width: int = 32
    dense_layers: int = 3
    decoder_widths: tuple = (64, 32, 1)

    def __post_init__(self):
        object.__setattr__(self, "decoder_widths", tuple(int(w) for w in self.decoder_widths))
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        if self.dense_layers < 1:
            raise ConfigError("dense_layers must be >= 1")
        if self.base_width < 4:
            raise ConfigError("base_width must be >= 4")
        if not self.decoder_widths or self.decoder_widths[-1] != 1:
            raise ConfigError("decoder must end with a single output channel")
        if min(self.decoder_widths) < 1:
            raise ConfigError("decoder widths must be positive")

    @property
    def separable(self):
        return self.variant in ("lightweight", "lightweight-cbam")

    @property
    def with_cbam(self):
        return self.variant in ("lightweight", "baseline+cbam")

    @property
    def block_width(self):
        return self.base_width * (self.dense_layers + 1)


@dataclass(frozen=True)
class Layer:
    name: str
    role: str  # "conv", "dsconv" or "cbam"
    tensors: dict = field(default_factory=dict)

    @property
    def n_params(self):
        return sum(t.size for t in self.tensors.values())


@dataclass(frozen=True)
class GeneratorWeights:
    config: GeneratorConfig
    layers: tuple

    def layer(self, name):
        for lay in self.layers:
            if lay.name == name:
                return lay
        raise KeyError(name)

    def named_tensors(self):
        """Yield ``("layer.key", array)`` in build order."""
        for lay in self.layers:
            for key, t in lay.tensors.items():
                yield f"{lay.name}.{key}", t

    def n_params(self):
        return sum(t.size for _, t in self.named_tensors())

    def with_tensors(self, flat):
        """Copy with tensors replaced from a ``{"layer.key": array}`` mapping."""
        layers = []
        for lay in self.layers:
            tensors = {k: np.asarray(flat.get(f"{lay.name}.{k}", v), dtype=v.dtype).reshape(v.shape)
                       for k, v in lay.tensors.items()}
            layers.append(replace(lay, tensors=tensors))
        return replace(self, layers=tuple(layers))

    def zeros_like(self):
        return self.with_tensors({n: np.zeros_like(t) for n, t in self.named_tensors()})


def layer_plan(cfg):
    """``(name, role, c_in, c_out)`` for every layer in build order."""
    plan = [("stem", "conv", 2, cfg.base_width)]
    kind = "dsconv" if cfg.separable else "conv"
    for i in range(cfg.dense_layers):
        plan.append((f"dense{i}", kind, cfg.base_width * (i + 1), cfg.base_width))
    if cfg.with_cbam:
        plan.append(("cbam", "cbam", cfg.block_width, cfg.block_width))
    c_in = cfg.block_width
    for i, c_out in enumerate(cfg.decoder_widths):
        plan.append((f"dec{i}", kind, c_in, c_out))
        c_in = c_out
    return plan


def _uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)


def build_generator(cfg, seed=0):
    """Initialise weights with He-style uniform fan-in scaling; biases start at zero."""
    if not isinstance(cfg, GeneratorConfig):
        raise ConfigError("build_generator needs a GeneratorConfig")
    rng = np.random.default_rng(seed)
    k = KERNEL
    layers = []
    for name, role, c_in, c_out in layer_plan(cfg):
        if role == "conv":
            tensors = {"kernel": _uniform(rng, (c_out, c_in, k, k), c_in * k * k),
                       "bias": np.zeros(c_out, DTYPE)}
        elif role == "dsconv":
            tensors = {"depthwise": _uniform(rng, (c_in, 1, k, k), k * k),
                       "pointwise": _uniform(rng, (c_out, c_in, 1, 1), c_in),
                       "bias": np.zeros(c_out, DTYPE)}
        else:
            p = attention.CbamParams.random(c_in, rng)
            tensors = {"w0": p.w0, "w1": p.w1, "spatial_kernel": p.spatial_kernel,
                       "spatial_bias": np.zeros(1, DTYPE)}
        layers.append(Layer(name, role, tensors))
    return GeneratorWeights(cfg, tuple(layers))


class ArrayOps:
    """Forward-only ops on numpy tensors."""

    @staticmethod
    def conv(x, kernel, bias):
        return nn.conv2d(x, nn.ConvParams(kernel, bias))

    @staticmethod
    def dsconv(x, depthwise, pointwise, bias):
        return nn.dsconv2d(x, nn.DsConvParams(depthwise, pointwise, bias))

    @staticmethod
    def act(x, kind):
        return nn.activation(x, kind)

    @staticmethod
    def concat(parts):
        return concat_channels(*parts)

    @staticmethod
    def cbam(x, w0, w1, spatial_kernel, spatial_bias):
        p = attention.CbamParams(w0, w1, spatial_kernel, float(spatial_bias[0]))
        return attention.cbam(x, p).f_double_prime

    @staticmethod
    def affine(x, scale, shift):
        return x * x.dtype.type(scale) + x.dtype.type(shift)


def run_network(weights, x, ops, fetch):
    """Shared forward body. ``fetch(layer, key)`` supplies each parameter so the
    same code drives both plain evaluation and gradient recording."""
    cfg = weights.config

    def apply(lay, h):
        t = {k: fetch(lay.name, k) for k in lay.tensors}
        if lay.role == "conv":
            return ops.conv(h, t["kernel"], t["bias"])
        return ops.dsconv(h, t["depthwise"], t["pointwise"], t["bias"])

    layers = {lay.name: lay for lay in weights.layers}
    feats = [ops.act(apply(layers["stem"], x), "leaky_relu")]
    for i in range(cfg.dense_layers):
        inp = feats[0] if len(feats) == 1 else ops.concat(feats)
        feats.append(ops.act(apply(layers[f"dense{i}"], inp), "leaky_relu"))
    h = ops.concat(feats)
    if cfg.with_cbam:
        h = ops.cbam(h, *(fetch("cbam", k) for k in ("w0", "w1", "spatial_kernel", "spatial_bias")))
    n_dec = len(cfg.decoder_widths)
    for i in range(n_dec):
        h = apply(layers[f"dec{i}"], h)
        h = ops.act(h, "tanh" if i == n_dec - 1 else "leaky_relu")
    return ops.affine(h, 0.5, 0.5)


def forward_fuse(weights, ir, vi):
    """Fuse a registered (1, h, w) IR/visible pair into a (1, h, w) image in [0, 1]."""
    ir = as_tensor(ir, "ir")
    vi = as_tensor(vi, "vi")
    if ir.shape != vi.shape or ir.shape[0] != 1:
        raise ShapeError(f"ir {ir.shape} and vi {vi.shape} must both be (1, h, w) and equal")
    x = concat_channels(ir, vi).astype(DTYPE, copy=False)
    return run_network(weights, x, ArrayOps, lambda name, key: weights.layer(name).tensors[key])


# ---------------------------------------------------------------- accounting

def params_conv(k, c_in, c_out, with_bias=True):
    return k * k * c_in * c_out + (c_out if with_bias else 0)


def params_dsconv(k, c_in, c_out):
    return k * k * c_in + c_in * c_out + c_out


def params_cbam(c, hidden=None):
    hidden = nn.mlp_hidden(c) if hidden is None else hidden
    return 2 * c * hidden + 2 * 49 + 1


def macs_conv(k, c_in, c_out, h, w):
    return k * k * c_in * c_out * h * w


def macs_dsconv(k, c_in, c_out, h, w):
    return (k * k * c_in + c_in * c_out) * h * w


def macs_cbam(c, h, w, hidden=None):
    # two spatial pools (2c), channel rescale (c), two channel pools (2c),
    # 7x7 conv over 2 maps (98), spatial rescale (c), plus two MLP passes
    hidden = nn.mlp_hidden(c) if hidden is None else hidden
    return (6 * c + 98) * h * w + 4 * c * hidden


@dataclass(frozen=True)
class LayerCost:
    name: str
    role: str
    c_in: int
    c_out: int
    params: int
    macs: int


@dataclass(frozen=True)
class CostReport:
    params: int
    macs: int
    size: tuple
    per_layer: tuple


def cost_report(weights_or_config, h=320, w=320):
    """Closed-form parameter and multiply-accumulate counts at input size (h, w)."""
    cfg = weights_or_config.config if isinstance(weights_or_config, GeneratorWeights) else weights_or_config
    rows = []
    for name, role, c_in, c_out in layer_plan(cfg):
        if role == "conv":
            p, m = params_conv(KERNEL, c_in, c_out), macs_conv(KERNEL, c_in, c_out, h, w)
        elif role == "dsconv":
            p, m = params_dsconv(KERNEL, c_in, c_out), macs_dsconv(KERNEL, c_in, c_out, h, w)
        else:
            p, m = params_cbam(c_in), macs_cbam(c_in, h, w)
        rows.append(LayerCost(name, role, c_in, c_out, p, m))
    return CostReport(sum(r.params for r in rows), sum(r.macs for r in rows), (h, w), tuple(rows))
