"""Compiled and numpy kernels must agree bit for bit."""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from caem import _kernels
from caem._kernels import _pykernels

HAVE_CYTHON = "cython" in _kernels.available_backends()
needs_cython = pytest.mark.skipif(not HAVE_CYTHON, reason="compiled kernels not built")


def _naive_im2col(xp, kh, kw, sh, sw):
    b, c, hp, wp = xp.shape
    ho, wo = (hp - kh) // sh + 1, (wp - kw) // sw + 1
    out = np.zeros((b, c * kh * kw, ho * wo))
    for i in range(ho):
        for j in range(wo):
            patch = xp[:, :, i * sh:i * sh + kh, j * sw:j * sw + kw]
            out[:, :, i * wo + j] = patch.reshape(b, -1)
    return out


conv_shapes = st.tuples(
    st.integers(1, 3), st.integers(1, 3),  # batch, channels
    st.integers(1, 4), st.integers(1, 4),  # kernel
    st.integers(1, 3), st.integers(1, 3),  # stride
    st.integers(0, 5), st.integers(0, 5),  # extra extent
    st.integers(0, 2**31 - 1),
)


@settings(max_examples=60, deadline=None)
@given(conv_shapes)
def test_numpy_im2col_matches_naive_loop(shape):
    b, c, kh, kw, sh, sw, eh, ew, seed = shape
    xp = np.random.default_rng(seed).standard_normal((b, c, kh + eh, kw + ew))
    np.testing.assert_array_equal(_pykernels.im2col(xp, kh, kw, sh, sw), _naive_im2col(xp, kh, kw, sh, sw))


@settings(max_examples=40, deadline=None)
@given(conv_shapes)
def test_col2im_is_adjoint_of_im2col(shape):
    b, c, kh, kw, sh, sw, eh, ew, seed = shape
    rng = np.random.default_rng(seed)
    hp, wp = kh + eh, kw + ew
    x = rng.standard_normal((b, c, hp, wp))
    cols = _pykernels.im2col(x, kh, kw, sh, sw)
    y = rng.standard_normal(cols.shape)
    lhs = np.sum(cols * y)
    rhs = np.sum(x * _pykernels.col2im(y, c, hp, wp, kh, kw, sh, sw))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@needs_cython
@settings(max_examples=60, deadline=None)
@given(conv_shapes)
def test_backends_bit_identical_conv(shape):
    b, c, kh, kw, sh, sw, eh, ew, seed = shape
    rng = np.random.default_rng(seed)
    hp, wp = kh + eh, kw + ew
    xp = rng.standard_normal((b, c, hp, wp))
    cy = _kernels.get_module("cython")
    py = _kernels.get_module("python")
    cols_c, cols_p = cy.im2col(xp, kh, kw, sh, sw), py.im2col(xp, kh, kw, sh, sw)
    assert np.array_equal(cols_c, cols_p)
    y = rng.standard_normal(cols_p.shape)
    assert np.array_equal(cy.col2im(y, c, hp, wp, kh, kw, sh, sw), py.col2im(y, c, hp, wp, kh, kw, sh, sw))


@needs_cython
@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 9), st.integers(1, 9),
       st.integers(1, 3), st.integers(1, 3), st.booleans(), st.integers(0, 2**31 - 1))
def test_backends_bit_identical_maxpool(b, c, h, w, ph, pw, ties, seed):
    if h < ph or w < pw:
        return
    rng = np.random.default_rng(seed)
    x = rng.integers(-2, 3, size=(b, c, h, w)).astype(float) if ties else rng.standard_normal((b, c, h, w))
    cy = _kernels.get_module("cython")
    py = _kernels.get_module("python")
    out_c, arg_c = cy.maxpool_forward(x, ph, pw)
    out_p, arg_p = py.maxpool_forward(x, ph, pw)
    assert np.array_equal(out_c, out_p)
    assert np.array_equal(arg_c, arg_p)
    g = rng.standard_normal(out_p.shape)
    assert np.array_equal(cy.maxpool_backward(g, arg_c, h, w, ph, pw), py.maxpool_backward(g, arg_p, h, w, ph, pw))


def test_maxpool_ties_route_to_first_maximum():
    x = np.zeros((1, 1, 2, 2))
    out, arg = _pykernels.maxpool_forward(x, 2, 2)
    g = _pykernels.maxpool_backward(np.ones((1, 1, 1, 1)), arg, 2, 2, 2, 2)
    np.testing.assert_array_equal(g[0, 0], [[1.0, 0.0], [0.0, 0.0]])


def test_maxpool_drops_trailing_partial_windows():
    x = np.arange(15.0).reshape(1, 1, 3, 5)
    out, _ = _pykernels.maxpool_forward(x, 2, 2)
    np.testing.assert_array_equal(out[0, 0], [[6.0, 8.0]])


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        _kernels.set_backend("fortran")


@pytest.mark.parametrize("requested", ["python"] + (["cython"] if HAVE_CYTHON else []))
def test_environment_selects_backend(requested):
    env = dict(os.environ, CAEM_KERNELS=requested)
    out = subprocess.run([sys.executable, "-c", "from caem import _kernels; print(_kernels.get_backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == requested


def test_model_forward_identical_across_backends():
    if not HAVE_CYTHON:
        pytest.skip("compiled kernels not built")
    from caem.gradsuite import miniature_batch, miniature_model
    model = miniature_model(0)
    x = miniature_batch(0, 3)
    previous = _kernels.get_backend()
    try:
        results = {}
        for name in ("python", "cython"):
            _kernels.set_backend(name)
            results[name] = model.sample_scores(x)
    finally:
        _kernels.set_backend(previous)
    assert np.array_equal(results["python"], results["cython"])
