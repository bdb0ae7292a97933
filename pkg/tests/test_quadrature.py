import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dgiga.quadrature import element_rule, facet_rule, gauss_legendre, scaled


def test_midpoint_rule():
    r = gauss_legendre(1)
    assert r.nodes[0] == 0.5 and r.weights[0] == 1.0


def test_two_point_rule():
    r = gauss_legendre(2)
    d = 1 / (2 * np.sqrt(3))
    np.testing.assert_allclose(r.nodes, [0.5 - d, 0.5 + d], atol=1e-15)
    np.testing.assert_allclose(r.weights, [0.5, 0.5], atol=1e-15)
    assert r.integrate(lambda x: x**3) == pytest.approx(0.25, abs=1e-15)


@pytest.mark.parametrize("n", [3, 7, 12, 30])
def test_matches_numpy_leggauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    r = gauss_legendre(n)
    np.testing.assert_allclose(r.nodes, 0.5 * (x + 1), atol=1e-14)
    np.testing.assert_allclose(r.weights, 0.5 * w, atol=1e-14)


@given(st.integers(1, 20), st.data())
def test_polynomial_exactness(n, data):
    k = data.draw(st.integers(0, 2 * n - 1))
    r = gauss_legendre(n)
    assert r.integrate(lambda x: x**k) == pytest.approx(1 / (k + 1), rel=1e-13)


@pytest.mark.parametrize("n", [0, 31])
def test_out_of_range(n):
    with pytest.raises(ValueError):
        gauss_legendre(n)


def test_scaled_and_degree_rules():
    r = scaled(gauss_legendre(3), 2.0, 5.0)
    assert r.integrate(lambda x: x**2) == pytest.approx((125 - 8) / 3)
    ru, rv = element_rule(3)
    assert len(ru) == len(rv) == 5
    assert len(facet_rule(4)) == 6
    with pytest.raises(ValueError):
        facet_rule(0)
