"""Quadrature rules on the unit interval and the reference triangle.

Triangle rules are returned in barycentric form: an ``(nq, 3)`` array of
barycentric coordinates and weights that sum to one, so that
``area * sum(w * f(x_q))`` integrates ``f`` over any triangle.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_interval(n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1], exact to degree 2n-1."""
    if n_points < 1:
        raise ValueError("need at least one Gauss point")
    x, w = np.polynomial.legendre.leggauss(n_points)
    return 0.5 * (x + 1.0), 0.5 * w


def _perms3(a: float, b: float, c: float) -> list[tuple[float, float, float]]:
    out = []
    for p in ((a, b, c), (b, c, a), (c, a, b), (a, c, b), (c, b, a), (b, a, c)):
        if p not in out:
            out.append(p)
    return out


# Symmetric rules (Strang-Fix / Dunavant), weights relative to the triangle area.
_SYMMETRIC = {
    1: [((1 / 3, 1 / 3, 1 / 3), 1.0)],
    2: [((2 / 3, 1 / 6, 1 / 6), 1 / 3)],
    4: [
        ((0.108103018168070, 0.445948490915965, 0.445948490915965), 0.223381589678011),
        ((0.816847572980459, 0.091576213509771, 0.091576213509771), 0.109951743655322),
    ],
}


@lru_cache(maxsize=None)
def _symmetric_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    pts, wts = [], []
    for (a, b, c), w in _SYMMETRIC[degree]:
        for p in _perms3(a, b, c):
            pts.append(p)
            wts.append(w)
    bary = np.array(pts)
    wts = np.array(wts)
    return bary, wts / wts.sum()


@lru_cache(maxsize=None)
def _collapsed_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    # Duffy map of the square onto the triangle; the Jacobian (1 - u) adds a degree.
    m = degree // 2 + 1
    m = max(m, (degree + 2) // 2)
    u, wu = gauss_interval(m + 1)
    v, wv = gauss_interval(m)
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv) * (1.0 - U)
    x = U.ravel()
    y = (V * (1.0 - U)).ravel()
    bary = np.column_stack([1.0 - x - y, x, y])
    w = W.ravel()
    return bary, w / w.sum()


def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points and normalized weights exact for polynomials of ``degree``.

    Degrees 1, 2 and 4 use the classical symmetric rules (1, 3 and 6 points);
    any other degree falls back to a collapsed Gauss product rule.
    """
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    if degree == 0:
        degree = 1
    if degree == 3:
        degree = 4
    if degree in _SYMMETRIC:
        return _symmetric_rule(degree)
    return _collapsed_rule(degree)
