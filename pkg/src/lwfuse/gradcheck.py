"""Finite-difference verification of every differentiable op.

Each check draws a small random float64 instance, projects the op output to a
scalar with fixed random weights, and compares the tape gradient of every
input and parameter against central differences. Instances are redrawn
until no kink (relu, max, abs) lies within a few epsilons of its switch
point, so the finite differences are taken on a smooth piece.
"""

import numpy as np

from . import autodiff as ad

EPSILON = 1e-3
TOLERANCE = 1e-3
MARGIN = 5 * EPSILON


def finite_diff_grad(loss_fn, params, epsilon=EPSILON):
    """Central differences ``(f(p + e) - f(p - e)) / 2e`` for each scalar of each array."""
    base = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    grads = {}
    for name, arr in base.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            hi = float(loss_fn(base))
            flat[i] = orig - epsilon
            lo = float(loss_fn(base))
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * epsilon)
        grads[name] = g
    return grads


def relative_error(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def _away_from_zero(rng, shape, lo=0.1, hi=1.0):
    return rng.uniform(lo, hi, shape) * rng.choice([-1.0, 1.0], shape)


def _separated(rng, n, lo=-1.0, hi=1.0):
    # distinct values with gaps of at least 0.8 * (hi - lo) / n
    grid = np.linspace(lo, hi, n)
    return rng.permutation(grid) + rng.uniform(-0.1, 0.1, n) * (hi - lo) / n


def _gaps_ok(v, axis):
    s = np.sort(v, axis=axis)
    top = np.take(s, -1, axis=axis) - np.take(s, -2, axis=axis) if v.shape[axis] > 1 else np.inf
    return np.all(top > MARGIN)


# Each case returns (params, build) where build(tape, vars) -> scalar Var.

def _case_conv2d(rng):
    c_in, c_out, k, h, w = rng.integers(1, 5), rng.integers(1, 5), rng.choice([1, 3, 5]), 6, 7
    p = {"x": rng.standard_normal((c_in, h, w)), "kernel": rng.standard_normal((c_out, c_in, k, k)),
         "bias": rng.standard_normal(c_out)}
    proj = rng.standard_normal((c_out, h, w))
    return p, lambda v: ad.weighted_sum(ad.conv2d(v["x"], v["kernel"], v["bias"]), proj)


def _case_depthwise(rng):
    c, k = rng.integers(1, 5), rng.choice([3, 5])
    p = {"x": rng.standard_normal((c, 8, 8)), "kernel": rng.standard_normal((c, 1, k, k))}
    proj = rng.standard_normal((c, 8, 8))
    return p, lambda v: ad.weighted_sum(ad.depthwise_conv2d(v["x"], v["kernel"]), proj)


def _case_pointwise(rng):
    c_in, c_out = rng.integers(1, 5), rng.integers(1, 5)
    p = {"x": rng.standard_normal((c_in, 5, 6)), "kernel": rng.standard_normal((c_out, c_in, 1, 1)),
         "bias": rng.standard_normal(c_out)}
    proj = rng.standard_normal((c_out, 5, 6))
    return p, lambda v: ad.weighted_sum(ad.pointwise_conv2d(v["x"], v["kernel"], v["bias"]), proj)


def _case_dsconv(rng):
    c_in, c_out = rng.integers(1, 5), rng.integers(1, 5)
    p = {"x": rng.standard_normal((c_in, 6, 6)), "depthwise": rng.standard_normal((c_in, 1, 3, 3)),
         "pointwise": rng.standard_normal((c_out, c_in, 1, 1)), "bias": rng.standard_normal(c_out)}
    proj = rng.standard_normal((c_out, 6, 6))
    return p, lambda v: ad.weighted_sum(
        ad.dsconv2d(v["x"], v["depthwise"], v["pointwise"], v["bias"]), proj)


def _case_conv7x7(rng):
    p = {"x": rng.standard_normal((2, 8, 8)), "kernel": 0.2 * rng.standard_normal((1, 2, 7, 7)),
         "bias": rng.standard_normal(1)}
    proj = rng.standard_normal((1, 8, 8))
    return p, lambda v: ad.weighted_sum(ad.conv7x7_2to1(v["x"], v["kernel"], v["bias"]), proj)


def _case_activation(kind):
    def case(rng):
        shape = (3, 4, 5)
        x = _away_from_zero(rng, shape) * 2 if kind in ("relu", "leaky_relu") else 2 * rng.standard_normal(shape)
        proj = rng.standard_normal(shape)
        return {"x": x}, lambda v: ad.weighted_sum(ad.activation(v["x"], kind), proj)
    return case


def _case_reduce_spatial(mode):
    def case(rng):
        c, h, w = 4, 8, 8
        x = np.stack([_separated(rng, h * w).reshape(h, w) for _ in range(c)])
        proj = rng.standard_normal(c)
        return {"x": x}, lambda v: ad.weighted_sum(ad.reduce_spatial(v["x"], mode), proj)
    return case


def _case_reduce_channels(mode):
    def case(rng):
        c, h, w = 4, 8, 8
        x = np.stack([_separated(rng, c) for _ in range(h * w)], axis=1).reshape(c, h, w)
        proj = rng.standard_normal((1, h, w))
        return {"x": x}, lambda v: ad.weighted_sum(ad.reduce_channels(v["x"], mode), proj)
    return case


def _case_concat(rng):
    p = {"a": rng.standard_normal((2, 4, 4)), "b": rng.standard_normal((3, 4, 4))}
    proj = rng.standard_normal((5, 4, 4))
    return p, lambda v: ad.weighted_sum(ad.concat_channels(v["a"], v["b"]), proj)


def _case_mlp(rng):
    c, hidden = 4, 4
    while True:
        p = {"v": rng.standard_normal(c), "w0": rng.standard_normal((hidden, c)),
             "w1": rng.standard_normal((c, hidden))}
        if np.all(np.abs(p["w0"] @ p["v"]) > 10 * MARGIN):
            break
    proj = rng.standard_normal(c)
    return p, lambda v: ad.weighted_sum(ad.mlp_bottleneck(v["v"], v["w0"], v["w1"]), proj)


def _cbam_params(rng, c):
    return {"w0": 0.5 * rng.standard_normal((4, c)), "w1": 0.5 * rng.standard_normal((c, 4)),
            "spatial_kernel": 0.1 * rng.standard_normal((1, 2, 7, 7)), "spatial_bias": rng.standard_normal(1)}


def _channel_ok(p):
    f = p["f"]
    if not _gaps_ok(f.reshape(f.shape[0], -1), axis=1):
        return False
    w0 = p["w0"]
    pooled = (f.reshape(f.shape[0], -1).mean(axis=1), f.reshape(f.shape[0], -1).max(axis=1))
    return all(np.all(np.abs(w0 @ q) > 10 * MARGIN) for q in pooled)


def _case_channel_attention(rng):
    c = 4
    while True:
        p = {"f": rng.standard_normal((c, 5, 5))}
        p.update({k: v for k, v in _cbam_params(rng, c).items() if k in ("w0", "w1")})
        if _channel_ok(p):
            break
    proj = rng.standard_normal((c, 5, 5))
    return p, lambda v: ad.weighted_sum(ad.channel_attention(v["f"], v["w0"], v["w1"])[1], proj)


def _case_spatial_attention(rng):
    c = 4
    while True:
        f = rng.standard_normal((c, 5, 5))
        if _gaps_ok(f, axis=0):
            break
    p = {"f": f}
    p.update({k: v for k, v in _cbam_params(rng, c).items() if k.startswith("spatial")})
    proj = rng.standard_normal((c, 5, 5))
    return p, lambda v: ad.weighted_sum(
        ad.spatial_attention(v["f"], v["spatial_kernel"], v["spatial_bias"])[1], proj)


def _case_cbam(rng):
    c = 4
    while True:
        p = {"f": rng.standard_normal((c, 5, 5))}
        p.update(_cbam_params(rng, c))
        if not _channel_ok(p):
            continue
        tape = ad.Tape()
        mc, _ = ad.channel_attention(tape.constant(p["f"]), tape.constant(p["w0"]), tape.constant(p["w1"]))
        if _gaps_ok(p["f"] * mc.value[:, None, None], axis=0):
            break
    proj = rng.standard_normal((c, 5, 5))
    return p, lambda v: ad.weighted_sum(
        ad.cbam(v["f"], v["w0"], v["w1"], v["spatial_kernel"], v["spatial_bias"]), proj)


def _grad_l1(img):
    dx = img[:, :-1, 1:] - img[:, :-1, :-1]
    dy = img[:, 1:, :-1] - img[:, :-1, :-1]
    return dx, dy


def _case_fusion_loss(rng):
    shape = (1, 5, 5)
    while True:
        ir, vi, f = (rng.uniform(0, 1, shape) for _ in range(3))
        dx, dy = _grad_l1(f)
        gt = np.maximum(*(np.abs(a) + np.abs(b) for a, b in (_grad_l1(ir), _grad_l1(vi))))
        ok = (np.all(np.abs(f - np.maximum(ir, vi)) > MARGIN)
              and np.all(np.abs(dx) > 2 * MARGIN) and np.all(np.abs(dy) > 2 * MARGIN)
              and np.all(np.abs(np.abs(dx) + np.abs(dy) - gt) > 3 * MARGIN))
        if ok:
            break
    return {"fused": f}, lambda v: ad.fusion_loss(v["fused"], ir, vi)


def _case_network(rng):
    """Two layers: dsconv 2->4, leaky_relu, conv 4->1, tanh."""
    while True:
        p = {"x": rng.uniform(0, 1, (2, 5, 5)), "dw": rng.standard_normal((2, 1, 3, 3)),
             "pw": rng.standard_normal((4, 2, 1, 1)), "b1": 0.1 * rng.standard_normal(4),
             "kernel": 0.3 * rng.standard_normal((1, 4, 3, 3)), "b2": 0.1 * rng.standard_normal(1)}
        tape = ad.Tape()
        v = {k: tape.constant(a) for k, a in p.items()}
        z = ad.dsconv2d(v["x"], v["dw"], v["pw"], v["b1"]).value
        if np.all(np.abs(z) > 20 * MARGIN):
            break
    proj = rng.standard_normal((1, 5, 5))

    def build(v):
        h = ad.activation(ad.dsconv2d(v["x"], v["dw"], v["pw"], v["b1"]), "leaky_relu")
        return ad.weighted_sum(ad.activation(ad.conv2d(h, v["kernel"], v["b2"]), "tanh"), proj)

    return p, build


CASES = {
    "conv2d": _case_conv2d,
    "depthwise_conv2d": _case_depthwise,
    "pointwise_conv2d": _case_pointwise,
    "dsconv2d": _case_dsconv,
    "conv7x7_2to1": _case_conv7x7,
    "sigmoid": _case_activation("sigmoid"),
    "tanh": _case_activation("tanh"),
    "relu": _case_activation("relu"),
    "leaky_relu": _case_activation("leaky_relu"),
    "reduce_spatial_mean": _case_reduce_spatial("mean"),
    "reduce_spatial_max": _case_reduce_spatial("max"),
    "reduce_channels_mean": _case_reduce_channels("mean"),
    "reduce_channels_max": _case_reduce_channels("max"),
    "concat_channels": _case_concat,
    "mlp_bottleneck": _case_mlp,
    "channel_attention": _case_channel_attention,
    "spatial_attention": _case_spatial_attention,
    "cbam": _case_cbam,
    "fusion_loss": _case_fusion_loss,
    "network": _case_network,
}


def check_op(name, rng, corrupt=False):
    """Worst relative error over the tensors of one random instance of ``name``."""
    params, build = CASES[name](rng)

    def loss_fn(p):
        tape = ad.Tape()
        v = {k: tape.param(k, a) for k, a in p.items()}
        return build(v).value

    tape = ad.Tape()
    v = {k: tape.param(k, np.asarray(a, dtype=np.float64)) for k, a in params.items()}
    analytic = tape.backward(build(v))
    if corrupt:
        analytic = {k: g * 1.1 + 1e-3 for k, g in analytic.items()}
    numeric = finite_diff_grad(loss_fn, params)
    return max(relative_error(analytic[k], numeric[k]) for k in params)


def run_gradcheck(seed=0, instances=5, corrupt=()):
    """Worst relative error per op over ``instances`` random draws."""
    rng = np.random.default_rng(seed)
    worst = {}
    for name in CASES:
        worst[name] = max(check_op(name, rng, corrupt=name in corrupt) for _ in range(instances))
    return worst

