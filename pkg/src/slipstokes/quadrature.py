"""
Quadrature rules on the reference triangle and on line segments.

Triangle rules are returned in barycentric form: ``bary`` has shape
(n_points, 3) and ``weights`` sum to one, so that

    int_T f dx  ~=  |T| * sum_q weights[q] * f(x_q).

Line rules live on [0, 1] with weights summing to one.
"""
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=None)
def gauss_line(n):
    """n-point Gauss-Legendre rule on [0, 1] (exact to degree 2n-1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _conical_product(n):
    # Collapsed (Duffy) product of Gauss-Jacobi(1,0) and Gauss-Legendre.
    # Exact to degree 2n-1 on the triangle.
    xa, wa = roots_jacobi(n, 1.0, 0.0)
    xb, wb = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (xa + 1.0)           # radial-like coordinate
    t = 0.5 * (xb + 1.0)
    wa = wa / 4.0                  # (1-x) jacobian absorbed by the weight
    wb = wb / 2.0
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(wa, wb)
    x = S.ravel()
    y = ((1.0 - S) * T).ravel()
    w = 2.0 * W.ravel()            # normalise to reference area 1/2 -> sum 1
    return np.column_stack([1.0 - x - y, x, y]), w


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Barycentric quadrature rule exact for polynomials up to ``degree``."""
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    if degree <= 1:
        return np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])
    if degree == 2:
        a, b = 2 / 3, 1 / 6
        bary = np.array([[a, b, b], [b, a, b], [b, b, a]])
        return bary, np.full(3, 1 / 3)
    n = (degree + 2) // 2
    bary, w = _conical_product(n)
    return bary, w / w.sum()
