import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import legendre

from contactline.errors import IndexOutOfRange
from contactline.surface import (
    SurfaceFunction,
    fractional_norm,
    gagliardo_surrogate,
    poisson_extend,
    spectral_norm,
)

ELL = 1.0


def _quad_h1(f):
    x, w = legendre.leggauss(200)
    return np.sqrt(w @ (f(x) ** 2 + f(x, 1) ** 2))


def test_nodal_roundtrip(rng):
    v = rng.standard_normal(32)
    f = SurfaceFunction.from_nodal(v, ELL)
    np.testing.assert_allclose(f.nodal, v, atol=1e-13)
    np.testing.assert_allclose(f(f.nodes), v, atol=1e-12)


def test_derivatives_match_finite_differences():
    f = SurfaceFunction.from_callable(lambda x: np.cos(np.pi * (x + 1)) + 0.3 * np.cos(1.5 * np.pi * (x + 1)), ELL, 16)
    x = np.linspace(-0.9, 0.9, 7)
    h = 1e-5
    for k in range(3):
        fd = (f(x + h, k) - f(x - h, k)) / (2 * h)
        np.testing.assert_allclose(fd, f(x, k + 1), atol=1e-6 * (1 + np.abs(f(x, k + 1)).max()))


def test_mean_and_arithmetic():
    f = SurfaceFunction.mode(2, ELL, 16, 0.5)
    g = SurfaceFunction.mode(0, ELL, 16, 0.25)
    assert (f + g).mean == 0.25
    assert (f - g).mean == -0.25
    assert (2 * f).coeffs[2] == 1.0
    assert (-f).coeffs[2] == -0.5
    x, w = legendre.leggauss(60)
    assert w @ f(x) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError):
        f + SurfaceFunction.zeros(ELL, 8)


def test_integer_spectral_norm_is_quadrature_norm():
    f = SurfaceFunction(np.array([0.2, 0.5, -0.3, 0.1, 0.0, 0.05, 0, 0]), ELL)
    assert spectral_norm(f, 1.0) == pytest.approx(_quad_h1(f), rel=1e-12)
    x, w = legendre.leggauss(200)
    assert spectral_norm(f, 0.0) == pytest.approx(np.sqrt(w @ f(x) ** 2), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.floats(-1.0, 1.0), min_size=6, max_size=6).filter(lambda c: max(abs(x) for x in c) > 1e-2),
    st.sampled_from([0.3, 0.5, 1.25, 1.45, 2.3, 2.5]),
)
def test_surrogate_within_factor_two_of_spectral(coeffs, s):
    a = np.zeros(16)
    a[1:7] = coeffs
    f = SurfaceFunction(a, ELL)
    ratio = gagliardo_surrogate(f, s, 2.0) / spectral_norm(f, s)
    assert 0.5 <= ratio <= 2.0


def test_fractional_norm_dispatch_and_errors():
    f = SurfaceFunction.mode(1, ELL, 16, 1.0)
    assert fractional_norm(f, 1.5, 2.0) == spectral_norm(f, 1.5)
    assert fractional_norm(f, 2.25, 4 / 3) > 0
    with pytest.raises(IndexOutOfRange):
        fractional_norm(f, 3.5, 1.5)
    with pytest.raises(IndexOutOfRange):
        fractional_norm(f, 1.0, 1.0)
    with pytest.raises(IndexOutOfRange):
        fractional_norm(SurfaceFunction.mode(1, ELL, 4), 1.0, 1.5)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 2.9), st.floats(1.05, 2.0), st.floats(-3, 3))
def test_norm_homogeneous(s, q, c):
    f = SurfaceFunction(np.r_[0.0, 0.4, -0.2, 0.1, np.zeros(12)], ELL)
    assert fractional_norm(c * f, s, q) == pytest.approx(abs(c) * fractional_norm(f, s, q), rel=1e-10, abs=1e-14)


def test_poisson_extension_harmonic_and_trace():
    f = SurfaceFunction(np.r_[0.0, 0.4, -0.2, 0.1, np.zeros(4)], ELL)
    x1 = np.linspace(-0.9, 0.9, 9)
    x2 = np.full_like(x1, -0.3)
    jet = poisson_extend(f, x1, x2, order=2).jet
    np.testing.assert_allclose(jet[(2, 0)] + jet[(0, 2)], 0.0, atol=1e-12)
    top = poisson_extend(f, x1, np.zeros_like(x1)).values
    np.testing.assert_allclose(top, f(x1), atol=1e-13)
