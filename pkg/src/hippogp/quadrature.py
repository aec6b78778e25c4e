"""Gauss-Legendre quadrature, used as the independent oracle for every
integral definition in the library's tests."""

from __future__ import annotations

import numpy as np
from scipy.special import roots_legendre

from .errors import NumericsError


def gauss_legendre_nodes(a: float, b: float, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for integrating over [a, b]."""
    if not a < b:
        raise ValueError(f"need a < b, got [{a}, {b}]")
    if nodes < 2:
        raise ValueError(f"need at least 2 nodes, got {nodes}")
    x, w = roots_legendre(nodes)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def quadrature(f, a: float, b: float, nodes: int) -> float:
    """Gauss-Legendre approximation of the integral of f over [a, b]; exact for
    polynomials of degree <= 2*nodes - 1 up to round-off."""
    xs, ws = gauss_legendre_nodes(a, b, nodes)
    vals = np.asarray([f(x) for x in xs], dtype=float)
    if not np.all(np.isfinite(vals)):
        bad = xs[~np.isfinite(vals)][0]
        raise NumericsError(f"integrand is non-finite at node x={bad}")
    return float(ws @ vals)
