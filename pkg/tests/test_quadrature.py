import numpy as np
import pytest
from hypothesis import given, strategies as st

from escm.errors import QuadratureFailure
from escm.quadrature import GAUSS_WEIGHTS, KRONROD_WEIGHTS, NODES, integrate


@pytest.mark.parametrize("deg", range(24))
def test_kronrod_exact_for_low_degree(deg):
    exact = (1 - (-1) ** (deg + 1)) / (deg + 1)
    assert KRONROD_WEIGHTS @ NODES ** deg == pytest.approx(exact, abs=1e-14)


@pytest.mark.parametrize("deg", range(14))
def test_gauss_exact_for_low_degree(deg):
    exact = (1 - (-1) ** (deg + 1)) / (deg + 1)
    assert GAUSS_WEIGHTS @ NODES ** deg == pytest.approx(exact, abs=1e-14)


def test_smooth_integrals():
    val, err = integrate(np.sin, 0.0, np.pi)
    assert val == pytest.approx(2.0, abs=1e-12)
    assert err <= 1e-8
    val, _ = integrate(lambda x: np.exp(-x * x), -5.0, 5.0)
    assert val == pytest.approx(np.sqrt(np.pi) * 0.9999999999984626, abs=1e-10)


def test_vector_integrand_shares_subdivision():
    val, _ = integrate(lambda x: np.vstack([x, x ** 2, np.cos(x)]), 0.0, 1.0)
    np.testing.assert_allclose(val, [0.5, 1 / 3, np.sin(1.0)], atol=1e-12)


def test_kink_handled_with_and_without_breakpoint():
    f = lambda x: np.abs(x - 0.3)
    exact = 0.5 * (0.3 ** 2 + 0.7 ** 2)
    assert integrate(f, 0, 1)[0] == pytest.approx(exact, abs=1e-8)
    assert integrate(f, 0, 1, breakpoints=[0.3])[0] == pytest.approx(exact, abs=1e-14)


def test_unreachable_tolerance_raises():
    with pytest.raises(QuadratureFailure):
        integrate(lambda x: x ** -0.9, 0.0, 1.0, epsabs=1e-12, limit=200)


def test_bad_interval():
    with pytest.raises(ValueError):
        integrate(np.sin, 1.0, 1.0)


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=8), st.floats(-2, 0), st.floats(0.1, 2))
def test_polynomials_match_antiderivative(coefs, a, width):
    b = a + width
    poly = np.polynomial.Polynomial(coefs)
    anti = poly.integ()
    val, _ = integrate(poly, a, b, epsabs=1e-10)
    assert val == pytest.approx(anti(b) - anti(a), abs=1e-10)
