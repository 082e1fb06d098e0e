import math

import numpy as np
import pytest

from lwfuse.errors import ArgumentError, DatasetError, ShapeError
from lwfuse.generator import GeneratorConfig, build_generator
from lwfuse.train import (
    LossCurve, OptimizerState, adamw_step, lr_at, sgd_step, synthetic_pairs, train_toy,
)

SMALL = GeneratorConfig("lightweight", base_width=8, dense_layers=2, decoder_widths=(8, 1))


def test_lr_schedule():
    assert lr_at(0, 200) == 0.01
    assert lr_at(200, 200) == 0.1
    assert lr_at(10, 200) == pytest.approx(0.055)
    assert lr_at(20, 200) == 0.1
    assert lr_at(0, 0) == 0.01
    for bad in (-1, 201):
        with pytest.raises(ArgumentError):
            lr_at(bad, 200)


def test_lr_monotone():
    vals = [lr_at(s, 50) for s in range(51)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_sgd_examples():
    st = OptimizerState("sgd", lr=0.01)
    p = {"t": np.array([1.0])}
    p = sgd_step(st, p, {"t": np.array([1.0])})
    assert p["t"][0] == pytest.approx(0.99)
    p = sgd_step(st, p, {"t": np.array([1.0])})
    assert st.slots["t"][0] == pytest.approx(1.9)
    assert p["t"][0] == pytest.approx(0.971)
    st = OptimizerState("sgd_momentum", lr=0.3)
    assert sgd_step(st, {"t": np.array([2.0])}, {"t": np.array([0.0])})["t"][0] == 2.0


def test_adamw_examples():
    st = OptimizerState("adamw", lr=0.01, weight_decay=0.0)
    assert adamw_step(st, {"t": np.array([1.0])}, {"t": np.array([1.0])})["t"][0] == pytest.approx(0.99)
    st = OptimizerState("adamw", lr=0.01, weight_decay=0.0)
    p = {"t": np.array([1.0])}
    for _ in range(5):
        p = adamw_step(st, p, {"t": np.array([0.0])})
    assert p["t"][0] == 1.0
    st = OptimizerState("adamw", lr=0.1)
    assert adamw_step(st, {"t": np.array([1.0])}, {"t": np.array([0.0])})["t"][0] == pytest.approx(0.99995)


@pytest.mark.parametrize("g", [1e-4, 0.3, 50.0, -7.0])
def test_adamw_first_step_magnitude(g):
    st = OptimizerState("adamw", lr=0.02, weight_decay=0.0)
    p = adamw_step(st, {"t": np.full(4, 0.5)}, {"t": np.full(4, g)})
    np.testing.assert_allclose(np.abs(p["t"] - 0.5), 0.02, rtol=1e-3)


@pytest.mark.parametrize("step", [sgd_step, adamw_step])
def test_optimizer_shape_and_dtype(step, rng):
    st = OptimizerState("adamw" if step is adamw_step else "sgd")
    p = {"a": rng.standard_normal((2, 3)).astype(np.float32)}
    g = {"a": rng.standard_normal((2, 3))}
    out = step(st, p, g)
    assert out["a"].shape == (2, 3) and out["a"].dtype == np.float32
    with pytest.raises(ShapeError):
        step(st, p, {"a": np.zeros(6)})
    with pytest.raises(ShapeError):
        step(st, p, {})


def test_unknown_optimizer():
    with pytest.raises(ArgumentError):
        OptimizerState("rmsprop")


def test_optimizer_determinism(rng):
    p = {"a": rng.standard_normal(5)}
    g = {"a": rng.standard_normal(5)}
    outs = []
    for _ in range(2):
        st = OptimizerState("adamw", lr=0.05)
        q = p
        for _ in range(3):
            q = adamw_step(st, q, g)
        outs.append(q["a"].tobytes())
    assert outs[0] == outs[1]


def test_zero_steps_unchanged():
    ds = synthetic_pairs(2, 8)
    w0 = build_generator(SMALL, 5)
    w, curve = train_toy(SMALL, ds, 0, seed=5)
    for (_, a), (_, b) in zip(w.named_tensors(), w0.named_tensors()):
        assert a.tobytes() == b.tobytes()
    assert len(curve.points) == 1


def test_empty_dataset():
    with pytest.raises(ArgumentError):
        train_toy(SMALL, [], 3)
    with pytest.raises(DatasetError):
        train_toy(SMALL, [], 3)


def test_mismatched_pair():
    with pytest.raises(ShapeError):
        train_toy(SMALL, [(np.zeros((1, 8, 8)), np.zeros((1, 8, 9)))], 1)


@pytest.mark.parametrize("opt", ["adamw", "sgd"])
def test_training_deterministic(opt):
    ds = synthetic_pairs(2, 12, seed=3)
    _, a = train_toy(SMALL, ds, 4, opt, seed=1)
    _, b = train_toy(SMALL, ds, 4, opt, seed=1)
    assert a.to_csv() == b.to_csv()
    assert len(a.points) == 5


def test_small_network_learns():
    ds = synthetic_pairs(4, 16, seed=0)
    _, curve = train_toy(SMALL, ds, 60, "adamw")
    assert all(math.isfinite(x) and x >= 0 for x in curve.losses)
    assert curve.losses[-1] <= 0.5 * curve.losses[0]


def test_callback_sees_each_step():
    seen = []
    train_toy(SMALL, synthetic_pairs(1, 8), 3, callback=lambda s, l: seen.append(s))
    assert seen == [0, 1, 2]


def test_curve_csv():
    c = LossCurve([(0, 1.5), (1, 0.25)])
    assert c.to_csv() == "step,loss\n0,1.5\n1,0.25\n"
    assert c.losses == [1.5, 0.25]


def test_synthetic_pairs():
    ds = synthetic_pairs(3, 16, seed=9)
    assert len(ds) == 3
    for ir, vi in ds:
        assert ir.shape == vi.shape == (1, 16, 16)
        assert ir.min() >= 0 and vi.max() <= 1
    again = synthetic_pairs(3, 16, seed=9)
    assert all(a.tobytes() == b.tobytes() for p, q in zip(ds, again) for a, b in zip(p, q))


@pytest.mark.slow
def test_reduced_lr_halves_default_loss():
    ds = synthetic_pairs(8, 32)
    _, curve = train_toy(GeneratorConfig(), ds, 200, "adamw", lr_scale=0.01)
    assert curve.losses[-1] <= 0.5 * curve.losses[0]


@pytest.mark.slow
def test_thousand_steps_finite():
    ds = synthetic_pairs(8, 32)
    _, curve = train_toy(GeneratorConfig(), ds, 1000, "adamw")
    assert all(math.isfinite(x) for x in curve.losses)
