import math

import numpy as np
import pytest

from stwave.quadrature import gauss_interval, triangle_rule


def _monomial_integral(a: int, b: int) -> float:
    # integral of x^a y^b over the unit reference triangle, divided by its area 1/2
    return 2.0 * math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
def test_gauss_interval_exact_to_degree(n):
    x, w = gauss_interval(n)
    for k in range(2 * n):
        assert np.dot(w, x**k) == pytest.approx(1.0 / (k + 1), rel=1e-14, abs=1e-15)


def test_gauss_interval_rejects_zero_points():
    with pytest.raises(ValueError):
        gauss_interval(0)


@pytest.mark.parametrize("degree", [0, 1, 2, 3, 4, 5, 6, 8, 10])
def test_triangle_rule_exact_for_monomials(degree):
    bary, w = triangle_rule(degree)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(bary.sum(axis=1), 1.0, atol=1e-14)
    x, y = bary[:, 1], bary[:, 2]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            assert np.dot(w, x**a * y**b) == pytest.approx(_monomial_integral(a, b), rel=1e-12, abs=1e-14)


def test_triangle_rule_points_inside():
    for degree in (1, 2, 4, 7):
        bary, _ = triangle_rule(degree)
        assert bary.min() >= 0


def test_symmetric_rule_sizes():
    assert len(triangle_rule(1)[1]) == 1
    assert len(triangle_rule(2)[1]) == 3
    assert len(triangle_rule(4)[1]) == 6
