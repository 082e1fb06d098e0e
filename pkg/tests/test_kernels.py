import numpy as np
import pytest

from lwfuse import kernels
from lwfuse.kernels import _reference

from .oracles import conv2d_loops


@pytest.mark.parametrize("c_in,c_out,k,h,w", [(1, 1, 3, 3, 3), (3, 5, 3, 6, 7), (2, 7, 1, 4, 9), (4, 6, 5, 9, 5)])
def test_conv_forward_matches_loops(backend, rng, c_in, c_out, k, h, w):
    x = rng.standard_normal((c_in, h, w))
    kern = rng.standard_normal((c_out, c_in, k, k))
    pad = (k - 1) // 2
    out = kernels.conv2d_forward(np.pad(x, ((0, 0), (pad, pad), (pad, pad))), kern)
    np.testing.assert_allclose(out, conv2d_loops(x, kern), atol=1e-12)


def test_backends_agree(rng):
    if "compiled" not in kernels.available_backends():
        pytest.skip("compiled kernels not built")
    from lwfuse.kernels import _ckernels

    for dtype, tol in ((np.float32, 1e-4), (np.float64, 1e-11)):
        xp = rng.standard_normal((6, 12, 11)).astype(dtype)
        w = rng.standard_normal((9, 6, 3, 3)).astype(dtype)
        dw = rng.standard_normal((6, 3, 3)).astype(dtype)
        g = rng.standard_normal((9, 10, 9)).astype(dtype)
        gd = rng.standard_normal((6, 10, 9)).astype(dtype)
        pairs = [
            (_reference.conv2d_forward(xp, w), _ckernels.conv2d_forward(xp, w)),
            (_reference.conv2d_grad_input(g, w, xp.shape), _ckernels.conv2d_grad_input(g, w, xp.shape)),
            (_reference.conv2d_grad_weight(xp, g, 3), _ckernels.conv2d_grad_weight(xp, g, 3)),
            (_reference.depthwise_forward(xp, dw), _ckernels.depthwise_forward(xp, dw)),
            (_reference.depthwise_grad_input(gd, dw, xp.shape), _ckernels.depthwise_grad_input(gd, dw, xp.shape)),
            (_reference.depthwise_grad_weight(xp, gd, 3), _ckernels.depthwise_grad_weight(xp, gd, 3)),
        ]
        for ref, comp in pairs:
            assert ref.dtype == comp.dtype == dtype
            np.testing.assert_allclose(comp, ref, rtol=tol, atol=tol)


def test_grad_input_is_adjoint_of_forward(backend, rng):
    # <conv(x), g> == <x, conv^T(g)> for the padded input
    xp = rng.standard_normal((3, 8, 9))
    w = rng.standard_normal((4, 3, 3, 3))
    g = rng.standard_normal((4, 6, 7))
    lhs = np.sum(kernels.conv2d_forward(xp, w) * g)
    rhs = np.sum(xp * kernels.conv2d_grad_input(g, w, xp.shape))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_compiled_is_deterministic(rng):
    xp = rng.standard_normal((16, 40, 40)).astype(np.float32)
    w = rng.standard_normal((8, 16, 3, 3)).astype(np.float32)
    assert kernels.conv2d_forward(xp, w).tobytes() == kernels.conv2d_forward(xp.copy(), w.copy()).tobytes()


def test_use_backend_rejects_unknown():
    with pytest.raises(ValueError):
        kernels.use_backend("gpu")
