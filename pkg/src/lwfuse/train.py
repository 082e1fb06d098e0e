"""Optimizers, learning-rate schedule and a small deterministic training loop."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ArgumentError, EmptyDatasetError, ShapeError
from .generator import build_generator

LR_START = 0.01
LR_PEAK = 0.1
WARMUP_FRACTION = 0.1
WEIGHT_DECAY = 0.0005
fusion_loss = ad.fusion_loss_value


def lr_at(step, total_steps):
    """Linear ramp 0.01 -> 0.1 over the first 10% of steps, then flat at 0.1."""
    if not 0 <= step <= total_steps:
        raise ArgumentError(f"step {step} outside [0, {total_steps}]")
    ramp = WARMUP_FRACTION * total_steps
    if step == 0 or ramp == 0:
        return LR_START
    if step >= ramp:
        return LR_PEAK
    return LR_START + (LR_PEAK - LR_START) * step / ramp


@dataclass
class OptimizerState:
    kind: str = "adamw"  # "sgd_momentum" or "adamw"
    lr: float = LR_START
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = WEIGHT_DECAY
    t: int = 0
    slots: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "sgd":
            self.kind = "sgd_momentum"
        if self.kind not in ("sgd_momentum", "adamw"):
            raise ArgumentError(f"unknown optimizer {self.kind!r}")


def _check(params, grads):
    for k, p in params.items():
        if k not in grads or np.shape(grads[k]) != np.shape(p):
            raise ShapeError(f"gradient for {k!r} missing or mis-shaped")


def sgd_step(state, params, grads):
    """Heavy-ball momentum: ``v = m*v + g``; ``p -= lr*v``. Returns new params."""
    _check(params, grads)
    out = {}
    for k, p in params.items():
        p64 = np.asarray(p, dtype=np.float64)
        v = state.slots.get(k)
        v = np.zeros_like(p64) if v is None else v
        v = state.momentum * v + np.asarray(grads[k], dtype=np.float64)
        state.slots[k] = v
        out[k] = (p64 - state.lr * v).astype(np.asarray(p).dtype)
    return out


def adamw_step(state, params, grads):
    """Adam with bias correction and decoupled weight decay. Returns new params."""
    _check(params, grads)
    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    out = {}
    for k, p in params.items():
        p64 = np.asarray(p, dtype=np.float64)
        g = np.asarray(grads[k], dtype=np.float64)
        m, v = state.slots.get(k, (np.zeros_like(p64), np.zeros_like(p64)))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.slots[k] = (m, v)
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p64 = p64 - state.lr * (m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * p64)
        out[k] = p64.astype(np.asarray(p).dtype)
    return out


@dataclass
class LossCurve:
    points: list = field(default_factory=list)  # (step, loss)

    @property
    def losses(self):
        return [loss for _, loss in self.points]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "loss"])
        for step, loss in self.points:
            w.writerow([step, repr(float(loss))])
        return buf.getvalue()


def synthetic_pairs(n=8, size=32, seed=0):
    """Registered IR/visible toy pairs: warm blobs on a cool background for IR,
    oriented stripes with a brightness gradient for the visible band."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    pairs = []
    for _ in range(n):
        ir = 0.15 + 0.05 * rng.standard_normal((size, size)) * 0.2
        for _ in range(rng.integers(1, 4)):
            cy, cx = rng.uniform(0.15, 0.85, 2)
            r = rng.uniform(0.05, 0.15)
            ir = ir + rng.uniform(0.5, 0.8) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r))
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(3, 8)
        stripes = 0.5 + 0.5 * np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)))
        vi = 0.2 + 0.4 * stripes * (0.4 + 0.6 * yy) + 0.05 * rng.standard_normal((size, size))
        pairs.append((np.clip(ir, 0, 1)[None].astype(np.float32), np.clip(vi, 0, 1)[None].astype(np.float32)))
    return pairs


def batch_loss_and_grads(weights, dataset):
    """Mean loss over the dataset and its parameter gradients, in dataset order."""
    total, grads = 0.0, None
    for ir, vi in dataset:
        tape = ad.Tape()
        out = ad.trace_generator(tape, weights, ir, vi)
        loss = ad.fusion_loss(out, ir, vi)
        g = tape.backward(loss)
        total += float(loss.value)
        if grads is None:
            grads = {k: v.astype(np.float64) for k, v in g.items()}
        else:
            for k, v in g.items():
                grads[k] += v
    n = len(dataset)
    return total / n, {k: v / n for k, v in grads.items()}


def batch_loss(weights, dataset):
    from .generator import forward_fuse

    return sum(fusion_loss(forward_fuse(weights, ir, vi), ir, vi) for ir, vi in dataset) / len(dataset)


def train_toy(cfg, dataset, steps, optimizer="adamw", seed=0, weights=None, lr_scale=1.0, callback=None):
    """Full-batch training; returns ``(weights, LossCurve)``.

    The curve holds ``steps + 1`` points: the loss before each update and the
    loss after the final one. ``lr_scale`` multiplies the 0.01 -> 0.1 schedule.
    """
    if not dataset:
        raise EmptyDatasetError("training needs at least one image pair")
    if steps < 0:
        raise ArgumentError("steps must be >= 0")
    for ir, vi in dataset:
        if np.shape(ir) != np.shape(vi):
            raise ShapeError("every training pair must be registered (equal shapes)")
    weights = build_generator(cfg, seed) if weights is None else weights
    state = OptimizerState(kind=optimizer)
    step_fn = adamw_step if state.kind == "adamw" else sgd_step
    params = dict(weights.named_tensors())
    curve = LossCurve()
    for step in range(steps):
        loss, grads = batch_loss_and_grads(weights, dataset)
        curve.points.append((step, loss))
        if callback is not None:
            callback(step, loss)
        state.lr = lr_scale * lr_at(step, steps)
        params = step_fn(state, params, grads)
        weights = weights.with_tensors(params)
    curve.points.append((steps, batch_loss(weights, dataset)))
    return weights, curve
