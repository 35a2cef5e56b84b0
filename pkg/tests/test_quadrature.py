import math

import numpy as np
import pytest

from femeig.quadrature import MAX_DEGREE, edge_rule, triangle_rule


def exact_triangle_monomial(a, b):
    # int_T x^a y^b over the reference triangle = a! b! / (a+b+2)!
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("degree", range(1, MAX_DEGREE + 1))
def test_triangle_exactness(degree):
    rule = triangle_rule(degree)
    assert rule.weights.sum() == pytest.approx(0.5, abs=1e-14)
    assert (rule.weights > 0).all()
    x, y = rule.xy[:, 0], rule.xy[:, 1]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = exact_triangle_monomial(a, b)
            got = float(np.sum(rule.weights * x**a * y**b))
            assert abs(got - exact) <= 1e-13 * max(1.0, abs(exact))


def test_triangle_degree1_is_centroid():
    rule = triangle_rule(1)
    assert rule.points.shape == (1, 3)
    assert np.allclose(rule.points, 1.0 / 3.0, atol=1e-15)
    assert rule.weights[0] == pytest.approx(0.5, abs=1e-15)


def test_triangle_degree2_x_squared():
    rule = triangle_rule(2)
    got = float(np.sum(rule.weights * rule.xy[:, 0] ** 2))
    assert got == pytest.approx(1.0 / 12.0, abs=1e-14)


def test_triangle_degree4_x2y2():
    rule = triangle_rule(4)
    got = float(np.sum(rule.weights * rule.xy[:, 0] ** 2 * rule.xy[:, 1] ** 2))
    assert got == pytest.approx(1.0 / 180.0, abs=1e-14)


@pytest.mark.parametrize("degree", range(1, MAX_DEGREE + 1))
def test_edge_exactness(degree):
    rule = edge_rule(degree)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert (rule.weights > 0).all()
    for a in range(degree + 1):
        got = float(np.sum(rule.weights * rule.points**a))
        assert abs(got - 1.0 / (a + 1)) <= 1e-13


def test_edge_degree1_midpoint():
    rule = edge_rule(1)
    assert len(rule.points) == 1
    assert rule.points[0] == pytest.approx(0.5, abs=1e-15)
    assert rule.weights[0] == pytest.approx(1.0, abs=1e-15)


def test_edge_gauss_point_counts():
    assert len(edge_rule(3).points) == 2
    assert len(edge_rule(5).points) == 3
    assert float(np.sum(edge_rule(3).weights * edge_rule(3).points**3)) == pytest.approx(
        0.25, abs=1e-14
    )
    assert float(np.sum(edge_rule(5).weights * edge_rule(5).points**5)) == pytest.approx(
        1.0 / 6.0, abs=1e-14
    )


def test_unsupported_degree():
    for bad in (0, 11, -3):
        with pytest.raises(ValueError):
            triangle_rule(bad)
        with pytest.raises(ValueError):
            edge_rule(bad)
