from math import factorial

import numpy as np
import pytest

from slipstokes.quadrature import gauss_line, triangle_rule


def _monomial_mean(a, b, c):
    # (1/|T|) int_T l1^a l2^b l3^c = 2 a! b! c! / (a + b + c + 2)!
    return 2 * factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2)


@pytest.mark.parametrize("degree", range(0, 9))
def test_triangle_rule_exact_on_barycentric_monomials(degree):
    bary, w = triangle_rule(degree)
    assert np.isclose(w.sum(), 1.0, atol=1e-15)
    assert np.all(bary >= 0) and np.allclose(bary.sum(axis=1), 1.0)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            c = degree - a - b
            got = w @ (bary[:, 0] ** a * bary[:, 1] ** b * bary[:, 2] ** c)
            assert got == pytest.approx(_monomial_mean(a, b, c), rel=1e-13, abs=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_gauss_line_exact_to_degree_2n_minus_1(n):
    s, w = gauss_line(n)
    for k in range(2 * n):
        assert w @ s**k == pytest.approx(1 / (k + 1), rel=1e-14)
    assert abs(w @ s ** (2 * n) - 1 / (2 * n + 1)) > 1e-8


def test_two_point_gauss_nodes():
    s, w = gauss_line(2)
    np.testing.assert_allclose(s, [0.5 - 0.5 / np.sqrt(3), 0.5 + 0.5 / np.sqrt(3)], atol=1e-15)
    np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-15)
