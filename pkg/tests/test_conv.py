import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapdeblur.conv import (BoundaryPolicy, convolve, correlate, data_term, interior,
                            interior_inner, interior_mask)
from mapdeblur.core import GradientImage, delta_kernel

from conftest import random_gradients


def loop_convolve(x, k):
    """Replicate-padded convolution written out pixel by pixel."""
    h, w = x.shape
    kh, kw = k.shape
    ry, rx = kh // 2, kw // 2
    out = np.zeros_like(x)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for a in range(kh):
                for b in range(kw):
                    y = min(max(i - (a - ry), 0), h - 1)
                    xx = min(max(j - (b - rx), 0), w - 1)
                    acc += k[a, b] * x[y, xx]
            out[i, j] = acc
    return out


def test_delta_is_identity(rng):
    x = rng.random((6, 7))
    assert np.array_equal(convolve(x, delta_kernel(3)), x)
    assert np.array_equal(correlate(x, delta_kernel(3)), x)


def test_impulse_response_orientation(rng):
    k = rng.random((3, 5))
    x = np.zeros((9, 9))
    x[4, 4] = 1.0
    assert np.allclose(convolve(x, k)[3:6, 2:7], k)
    assert np.allclose(correlate(x, k)[3:6, 2:7], k[::-1, ::-1])


def test_convolve_matches_loop(rng):
    x = rng.random((6, 6))
    k = np.full((1, 3), 1 / 3)
    assert np.allclose(convolve(x, k), loop_convolve(x, k), atol=1e-12)
    k2 = rng.random((3, 3))
    assert np.allclose(convolve(x, k2), loop_convolve(x, k2), atol=1e-12)


def test_spatial_and_fft_paths_agree_on_interior(rng):
    x = rng.random((40, 40))
    for k in (rng.random((7, 7)), rng.random((33, 33)), rng.random((1, 9))):
        m = max(k.shape) // 2
        sl = interior(x.shape, m)
        assert np.allclose(convolve(x, k, "spatial")[sl], convolve(x, k, "fft")[sl], atol=1e-8)
        assert np.allclose(correlate(x, k, "spatial"), correlate(x, k, "fft"), atol=1e-8)


def test_kernel_larger_than_channel_rejected():
    with pytest.raises(ValueError):
        convolve(np.zeros((3, 3)), np.ones((5, 5)))
    with pytest.raises(ValueError):
        correlate(np.zeros((3, 3)), np.ones((5, 1)))


def test_even_kernel_rejected():
    with pytest.raises(ValueError):
        convolve(np.zeros((8, 8)), np.ones((2, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([(3, 3), (1, 5), (5, 3), (7, 7)]), st.integers(0, 2))
def test_adjointness(seed, ksize, extra_margin):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((16, 17))
    y = rng.standard_normal((16, 17))
    k = rng.standard_normal(ksize)
    m = max(ksize) // 2 + extra_margin
    lhs = interior_inner(convolve(x, k), y, m)
    rhs = float(np.sum(x * correlate(interior_mask(x.shape, m) * y, k)))
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)


def test_adjointness_fixed_instance(rng):
    x, y, k = rng.random((8, 8)), rng.random((8, 8)), rng.random((3, 3))
    lhs = interior_inner(convolve(x, k), y, 1)
    rhs = float(np.sum(x * correlate(interior_mask((8, 8), 1) * y, k)))
    assert abs(lhs - rhs) <= 1e-9 * abs(lhs)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y, k = rng.random((9, 9)), rng.random((9, 9)), rng.random((3, 3))
    assert np.allclose(convolve(a * x + b * y, k), a * convolve(x, k) + b * convolve(y, k), atol=1e-12)


def test_data_term_zero_cases(rng):
    l = random_gradients(rng, (10, 10))
    assert data_term(delta_kernel(1), l, l) == 0.0
    k = rng.random((3, 3))
    b = GradientImage(convolve(l.gx, k), convolve(l.gy, k))
    assert data_term(k, l, b) == pytest.approx(0.0, abs=1e-24)


def test_data_term_matches_loop(rng):
    l = random_gradients(rng, (7, 8))
    b = random_gradients(rng, (7, 8))
    k = rng.random((3, 3))
    m = 2
    total = 0.0
    for lc, bc in zip(l.channels(), b.channels()):
        conv = loop_convolve(lc, k)
        for i in range(m, 7 - m):
            for j in range(m, 8 - m):
                total += (conv[i, j] - bc[i, j]) ** 2
    assert data_term(k, l, b, BoundaryPolicy(m)) == pytest.approx(total, rel=1e-10)


def test_data_term_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        data_term(delta_kernel(1), random_gradients(rng, (5, 5)), random_gradients(rng, (5, 6)))


def test_data_term_shift_consistency(rng):
    l = random_gradients(rng, (12, 12))
    b = random_gradients(rng, (12, 12))
    d = random_gradients(rng, (12, 12))
    k = rng.random((3, 3))
    shifted_b = GradientImage(b.gx - convolve(d.gx, k), b.gy - convolve(d.gy, k))
    assert data_term(k, l - d, shifted_b) == pytest.approx(data_term(k, l, b), rel=1e-9)


def test_boundary_policy():
    bp = BoundaryPolicy.for_kernels(np.ones((3, 3)), np.ones((1, 9)))
    assert bp.margin == 4
    assert BoundaryPolicy(1).effective_margin(np.ones((7, 1))) == 3
    with pytest.raises(ValueError):
        BoundaryPolicy(-1)
    with pytest.raises(ValueError):
        interior((6, 6), 3)
