import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lwfuse.errors import DimensionError, ShapeError
from lwfuse.tensor import concat_channels, pad2d, reduce_channels, reduce_spatial, tensor_new

dims = st.tuples(st.integers(1, 4), st.integers(1, 6), st.integers(1, 6))
finite = st.floats(-10, 10, width=32)


def test_tensor_new_fill():
    assert np.array_equal(tensor_new((1, 2, 2), 0.0), np.zeros((1, 2, 2)))
    assert np.array_equal(tensor_new((3, 1, 1), 1.0), np.ones((3, 1, 1)))
    t = tensor_new((2, 2, 2), 0.5)
    assert t.dtype == np.float32
    assert t.sum() == 4.0


@pytest.mark.parametrize("shape", [(0, 1, 1), (1, 0, 3), (2, 2, 0)])
def test_tensor_new_rejects_empty(shape):
    with pytest.raises(DimensionError):
        tensor_new(shape)


def test_pad2d():
    t = tensor_new((1, 1, 1), 7.0)
    p = pad2d(t, 1)
    assert p.shape == (1, 3, 3)
    assert p[0, 1, 1] == 7 and np.count_nonzero(p) == 1
    assert pad2d(t, 0) is t
    assert pad2d(tensor_new((1, 2, 2), 1.0), 1).sum() == 4.0


def test_concat_channels():
    a, b = tensor_new((1, 2, 2), 1.0), tensor_new((1, 2, 2), 0.0)
    c = concat_channels(a, b)
    assert c.shape == (2, 2, 2)
    assert c[0].mean() == 1 and c[1].mean() == 0
    assert concat_channels(tensor_new((3, 4, 4)), tensor_new((5, 4, 4))).shape == (8, 4, 4)
    with pytest.raises(ShapeError):
        concat_channels(tensor_new((1, 2, 2)), tensor_new((1, 3, 2)))


def test_reduce_spatial():
    t = np.arange(4, dtype=np.float32).reshape(1, 2, 2)
    assert reduce_spatial(t, "mean")[0] == 1.5
    assert reduce_spatial(t, "max")[0] == 3
    c = tensor_new((3, 2, 5), 2.5)
    assert np.all(reduce_spatial(c, "mean") == 2.5) and np.all(reduce_spatial(c, "max") == 2.5)


def test_reduce_channels():
    t = np.array([2.0, 4.0], dtype=np.float32).reshape(2, 1, 1)
    assert reduce_channels(t, "mean")[0, 0, 0] == 3
    assert reduce_channels(t, "max")[0, 0, 0] == 4
    one = np.random.default_rng(0).random((1, 3, 3)).astype(np.float32)
    assert np.array_equal(reduce_channels(one, "mean"), one)
    assert np.array_equal(reduce_channels(one, "max"), one)
    assert np.all(reduce_channels(tensor_new((4, 2, 2), -1.0), "max") == -1)


@given(dims, dims, st.data())
def test_concat_then_slice_recovers_parts(da, db, data):
    db = (db[0], da[1], da[2])
    a = data.draw(arrays(np.float32, da, elements=finite))
    b = data.draw(arrays(np.float32, db, elements=finite))
    c = concat_channels(a, b)
    assert np.array_equal(c[:da[0]], a) and np.array_equal(c[da[0]:], b)


@settings(max_examples=50)
@given(dims, st.integers(0, 3), st.data())
def test_padding_scales_spatial_mean(shape, pad, data):
    t = data.draw(arrays(np.float64, shape, elements=st.floats(0, 10)))
    c, h, w = shape
    expected = reduce_spatial(t, "mean") * (h * w) / ((h + 2 * pad) * (w + 2 * pad))
    np.testing.assert_allclose(reduce_spatial(pad2d(t, pad), "mean"), expected, rtol=1e-12, atol=1e-12)


@given(dims, st.data())
def test_ops_are_deterministic(shape, data):
    t = data.draw(arrays(np.float32, shape, elements=finite))
    for mode in ("mean", "max"):
        assert reduce_spatial(t, mode).tobytes() == reduce_spatial(t.copy(), mode).tobytes()
        assert reduce_channels(t, mode).tobytes() == reduce_channels(t.copy(), mode).tobytes()
