import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lwfuse.attention import CbamParams, cbam, channel_attention, spatial_attention
from lwfuse.errors import ShapeError
from lwfuse.nn import sigmoid


def random_params(rng, c):
    return CbamParams.random(c, rng)


def test_zero_mlp_gives_half(rng):
    f = rng.standard_normal((8, 5, 5)).astype(np.float32)
    p = CbamParams.zeros(8)
    mc, fp = channel_attention(f, p)
    assert np.all(mc == 0.5)
    np.testing.assert_array_equal(fp, 0.5 * f)


def test_constant_feature_pools_coincide():
    f = np.full((4, 3, 3), 0.7, np.float32)
    eye = CbamParams.identity_mlp(4)
    mc, _ = channel_attention(f, eye)
    np.testing.assert_allclose(mc, sigmoid(np.full(4, 2 * 0.7, np.float32)), rtol=1e-7)


def test_hand_channel_case():
    f = np.zeros((2, 2, 2), np.float32)
    f[0] = [[0, 1], [2, 1]]  # mean 1, max 2
    mc, fp = channel_attention(f, CbamParams.identity_mlp(2))
    assert mc[0] == pytest.approx(0.95257, abs=1e-5)
    assert mc[1] == 0.5
    np.testing.assert_allclose(fp[0], f[0] * mc[0])


def test_channel_mismatch(rng):
    with pytest.raises(ShapeError):
        channel_attention(np.ones((3, 4, 4), np.float32), random_params(rng, 4))


def test_spatial_zero_kernel(rng):
    f = rng.standard_normal((3, 6, 6)).astype(np.float32)
    ms, fpp = spatial_attention(f, CbamParams.zeros(3))
    assert np.all(ms == 0.5)
    np.testing.assert_array_equal(fpp, 0.5 * f)


def test_spatial_single_channel_reductions(rng):
    f = rng.standard_normal((1, 6, 6)).astype(np.float32)
    k = rng.standard_normal((1, 2, 7, 7)).astype(np.float32)
    p = CbamParams.identity_mlp(1, spatial_kernel=k)
    merged = np.zeros((1, 2, 7, 7), np.float32)
    merged[0, 0] = k[0, 0] + k[0, 1]
    ms, _ = spatial_attention(f, p)
    ms_merged, _ = spatial_attention(f, CbamParams.identity_mlp(1, spatial_kernel=merged))
    # mean map == max map == f, so the two kernel halves act as one
    np.testing.assert_allclose(ms, ms_merged, rtol=1e-5)


def test_spatial_scaling_oracle(rng):
    f = rng.standard_normal((4, 9, 9)).astype(np.float32)
    ms, fpp = spatial_attention(f, random_params(rng, 4))
    assert np.all((ms > 0) & (ms < 1))
    nz = f != 0
    ratio = np.where(nz, fpp / np.where(nz, f, 1), 0)
    np.testing.assert_allclose(ratio[nz], np.broadcast_to(ms, f.shape)[nz], rtol=1e-6)


def test_cbam_examples(rng):
    f = rng.standard_normal((8, 6, 6)).astype(np.float32)
    tr = cbam(f, CbamParams.zeros(8))
    np.testing.assert_array_equal(tr.f_double_prime, 0.25 * f)
    p = random_params(rng, 8)
    zero = cbam(np.zeros((8, 6, 6), np.float32), p)
    assert np.all(zero.f_prime == 0) and np.all(zero.f_double_prime == 0)
    tr = cbam(f, p)
    mc, fp = channel_attention(f, p)
    ms, fpp = spatial_attention(fp, p)
    for a, b in ((tr.mc, mc), (tr.f_prime, fp), (tr.ms, ms), (tr.f_double_prime, fpp)):
        assert a.tobytes() == b.tobytes()
    assert tr.mc.shape == (8,) and tr.ms.shape == (1, 6, 6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 12))
def test_weights_in_open_interval_and_attenuation(seed, c):
    r = np.random.default_rng(seed)
    f = r.standard_normal((c, 7, 7)).astype(np.float32)
    tr = cbam(f, random_params(r, c))
    assert np.all((tr.mc > 0) & (tr.mc < 1))
    assert np.all((tr.ms > 0) & (tr.ms < 1))
    assert np.all(np.abs(tr.f_double_prime) <= np.abs(f))


@pytest.mark.parametrize("identity", [True, False])
def test_channel_permutation_equivariance(rng, identity):
    c = 4
    f = rng.standard_normal((c, 5, 5)).astype(np.float32)
    if identity:
        p = CbamParams.identity_mlp(c)
    else:
        p = CbamParams(rng.standard_normal((c, c)).astype(np.float32),
                       rng.standard_normal((c, c)).astype(np.float32), np.zeros((1, 2, 7, 7), np.float32))
    perm = rng.permutation(c)
    permuted = CbamParams(p.w0[:, perm], p.w1[perm, :], p.spatial_kernel)
    mc, _ = channel_attention(f, p)
    mc_perm, _ = channel_attention(f[perm], permuted)
    np.testing.assert_allclose(mc_perm, mc[perm], rtol=1e-6)


def test_cbam_deterministic(rng):
    f = rng.standard_normal((6, 8, 8)).astype(np.float32)
    p = random_params(rng, 6)
    f_before = f.copy()
    a, b = cbam(f, p), cbam(f, p)
    assert a.f_double_prime.tobytes() == b.f_double_prime.tobytes()
    assert np.array_equal(f, f_before)
