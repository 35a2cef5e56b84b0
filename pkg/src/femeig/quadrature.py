"""Quadrature on the reference triangle and the unit interval.

Triangle rules are collapsed (Duffy) Gauss-Legendre x Gauss-Jacobi
products: all weights positive, exact for polynomials up to the
advertised total degree.  All integrands assembled on affine elements
are polynomial, so with the default degrees quadrature contributes no
error to the convergence studies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

__all__ = ["MAX_DEGREE", "QuadratureRule", "triangle_rule", "edge_rule"]

MAX_DEGREE = 10


@dataclass(frozen=True)
class QuadratureRule:
    """Immutable point/weight set with a guaranteed exactness degree.

    Triangle rules store barycentric points (n, 3) and weights summing to
    1/2; edge rules store points (n,) in [0, 1] and weights summing to 1.
    """

    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def xy(self) -> np.ndarray:
        """Reference (x, y) coordinates of a triangle rule."""
        if self.points.ndim != 2:
            raise ValueError("xy is only defined for triangle rules")
        return self.points[:, 1:]


def _check_degree(degree: int):
    if not 1 <= degree <= MAX_DEGREE:
        raise ValueError(f"unsupported degree {degree} (supported: 1..{MAX_DEGREE})")


def _gauss01(n):
    # Gauss-Legendre mapped from [-1, 1] to [0, 1].
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_rule(degree: int) -> QuadratureRule:
    """Positive-weight rule on the reference triangle {x,y >= 0, x+y <= 1}."""
    _check_degree(degree)
    n = (degree + 2) // 2
    u, wu = roots_jacobi(n, 1.0, 0.0)  # weight (1 - x) on [-1, 1]
    u = 0.5 * (u + 1.0)
    wu = 0.25 * wu  # maps the Jacobi weight onto (1 - u) du over [0, 1]
    v, wv = _gauss01(n)

    # x = u, y = v * (1 - u); the (1 - u) Jacobi weight absorbs the Duffy factor.
    x = np.repeat(u, n)
    y = (1.0 - x) * np.tile(v, n)
    w = np.repeat(wu, n) * np.tile(wv, n)
    bary = np.column_stack([1.0 - x - y, x, y])
    return QuadratureRule(bary, w, degree)


def edge_rule(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1]."""
    _check_degree(degree)
    n = (degree + 2) // 2
    x, w = _gauss01(n)
    return QuadratureRule(x, w, degree)
