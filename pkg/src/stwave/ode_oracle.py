"""Closed-form solutions of the damped modal equation ``c'' + beta c' + lam c = f``.

Each spatial eigenmode of the wave equation obeys this scalar ODE with
``c(0) = alpha0`` and ``c'(0) = v0``.  The exact solution is the reference
for the quadratic-in-time Petrov-Galerkin scheme applied to one mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.integrate
from numpy.polynomial import Polynomial

from stwave.quadrature import gauss_interval
from stwave.linalg import SingularMatrixError, lu_factor_dense, lu_solve_dense
from stwave.temporal import TimePartition, assemble_temporal, initial_row_columns, quadratic_basis

CRITICAL_TOL = 1e-8
DUHAMEL_TOL = 1e-10
_SERIES_TERMS = 30

Forcing = Callable[[float], float]


@dataclass(frozen=True)
class ModalProblem:
    """``c'' + beta c' + lam c = f`` on ``t >= 0`` with ``c(0) = alpha0``, ``c'(0) = v0``.

    ``forcing`` is a callable or a :class:`numpy.polynomial.Polynomial`;
    polynomials of degree at most 3 get a closed-form particular solution.
    """

    beta: float = 0.0
    lam: float = 1.0
    alpha0: float = 0.0
    v0: float = 0.0
    forcing: Forcing | Polynomial | None = None

    def __post_init__(self):
        for name in ("beta", "lam"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")

    @property
    def discriminant(self) -> float:
        return self.beta**2 - 4 * self.lam

    @property
    def regime(self) -> str:
        d = self.discriminant
        if abs(d) < CRITICAL_TOL:
            return "critical"
        return "overdamped" if d > 0 else "underdamped"

    def f(self, t):
        if self.forcing is None:
            return np.zeros_like(np.asarray(t, dtype=float))
        return self.forcing(t)


def _series(d2: float, t: float) -> tuple[float, float]:
    """``cosh(s t)`` and ``sinh(s t) / s`` for ``s**2 = d2``, as power series in ``d2 t**2``."""
    x = d2 * t * t
    c = s = 0.0
    term_c, term_s = 1.0, t
    for k in range(_SERIES_TERMS):
        c += term_c
        s += term_s
        term_c *= x / ((2 * k + 1) * (2 * k + 2))
        term_s *= x / ((2 * k + 2) * (2 * k + 3))
        if abs(term_c) < 1e-17 * abs(c) and abs(term_s) < 1e-17 * abs(s):
            break
    return c, s


def fundamental(beta: float, lam: float, t: float) -> tuple[float, float]:
    """Fundamental solutions at ``t``: ``y1`` (``y1(0)=1, y1'(0)=0``) and ``g`` (``g(0)=0, g'(0)=1``).

    Their derivatives follow from ``y1' = -lam g`` and ``g' = y1 - beta g``.
    """
    r = -0.5 * beta
    d2 = 0.25 * (beta * beta - 4 * lam)
    if abs(beta * beta - 4 * lam) < CRITICAL_TOL or abs(d2) * t * t <= 1.0:
        ch, sh = _series(d2, t)
    elif d2 > 0:
        s = math.sqrt(d2)
        # cosh/sinh through exponentials of the two real roots to avoid overflow
        m1, m2 = r + s, r - s
        e1, e2 = math.exp(m1 * t), math.exp(m2 * t)
        g = (e1 - e2) / (m1 - m2)
        y1 = (m1 * e2 - m2 * e1) / (m1 - m2)
        return y1, g
    else:
        w = math.sqrt(-d2)
        ch, sh = math.cos(w * t), math.sin(w * t) / w
    e = math.exp(r * t)
    return e * (ch - r * sh), e * sh


def _polynomial_particular(beta: float, lam: float, p: Polynomial) -> Polynomial:
    """Polynomial ``q`` with ``q'' + beta q' + lam q = p``."""
    shift = 0 if lam > 0 else (1 if beta > 0 else 2)
    deg = p.degree() + shift
    n = deg + 1
    cols = []
    for k in range(n):
        basis = Polynomial.basis(k)
        image = basis.deriv(2) + beta * basis.deriv(1) + lam * basis
        cols.append(np.pad(image.coef, (0, n - len(image.coef)))[:n])
    L = np.array(cols).T
    rhs = np.pad(p.coef, (0, n - len(p.coef)))
    # the operator maps degree k to degree k - shift; fix the free low coefficients to 0
    coef = np.zeros(n)
    sub = L[: n - shift, shift:]
    coef[shift:] = np.linalg.solve(sub, rhs[: n - shift])
    return Polynomial(coef)


def _duhamel(p: ModalProblem, t: float) -> tuple[float, float]:
    if t == 0:
        return 0.0, 0.0

    def kernel(s, which):
        y1, g = fundamental(p.beta, p.lam, t - s)
        return (g if which == 0 else y1 - p.beta * g) * float(p.f(s))

    opts = dict(epsabs=DUHAMEL_TOL, epsrel=DUHAMEL_TOL, limit=200)
    val = scipy.integrate.quad(kernel, 0.0, t, args=(0,), **opts)[0]
    der = scipy.integrate.quad(kernel, 0.0, t, args=(1,), **opts)[0]
    return val, der


def solve_modal(p: ModalProblem, t, method: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """``c(t)`` and ``c'(t)``.

    ``method`` selects the particular solution: ``"polynomial"`` (closed
    form, forcing must be a polynomial of degree <= 3), ``"duhamel"``
    (adaptive quadrature of the convolution) or ``"auto"``.
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise ValueError("t must be nonnegative")
    forced = p.forcing is not None
    if method == "auto":
        method = "polynomial" if isinstance(p.forcing, Polynomial) and p.forcing.degree() <= 3 else "duhamel"
    if method not in ("polynomial", "duhamel"):
        raise ValueError(f"unknown method {method!r}")
    a0, b0 = p.alpha0, p.v0
    part = None
    if forced and method == "polynomial":
        if not isinstance(p.forcing, Polynomial):
            raise TypeError("polynomial method needs a numpy Polynomial forcing")
        part = _polynomial_particular(p.beta, p.lam, p.forcing)
        dpart = part.deriv()
        a0 -= part(0.0)
        b0 -= dpart(0.0)
    val = np.empty_like(ts)
    der = np.empty_like(ts)
    for i, ti in enumerate(ts):
        y1, g = fundamental(p.beta, p.lam, ti)
        val[i] = a0 * y1 + b0 * g
        der[i] = -p.lam * g * a0 + b0 * (y1 - p.beta * g)
        if part is not None:
            val[i] += part(ti)
            der[i] += dpart(ti)
        elif forced:
            v, d = _duhamel(p, ti)
            val[i] += v
            der[i] += d
    if np.ndim(t) == 0:
        return val[0], der[0]
    return val, der


def residual_check(p: ModalProblem, ts, step: float = 1e-4) -> float:
    """Max of ``|c'' + beta c' + lam c - f|`` over ``ts`` using central differences of ``c``."""
    ts = np.asarray(ts, dtype=float)
    if np.any(ts - step < 0):
        raise ValueError("sample points must be at least one step away from 0")
    cm, _ = solve_modal(p, ts - step)
    c0, _ = solve_modal(p, ts)
    cp, _ = solve_modal(p, ts + step)
    d2 = (cp - 2 * c0 + cm) / step**2
    d1 = (cp - cm) / (2 * step)
    f = np.array([float(p.f(x)) for x in ts])
    return float(np.max(np.abs(d2 + p.beta * d1 + p.lam * c0 - f)))


def modal_load(partition: TimePartition, forcing: Forcing | None, points: int = 6) -> np.ndarray:
    """``(f, phi_l)`` for the quadratic test functions ``l = 0 .. 2N-1``."""
    n = partition.n_dofs
    out = np.zeros(n + 1)
    if forcing is None:
        return out[:-1]
    s, w = gauss_interval(points)
    val, _ = quadratic_basis(s)
    for e, (t0, h) in enumerate(zip(partition.t_nodes[:-1], partition.h)):
        fv = np.array([float(forcing(t0 + si * h)) for si in s])
        out[2 * e : 2 * e + 3] += h * (val.T * (w * fv)).sum(axis=1)
    return out[:-1]


@dataclass(frozen=True)
class DiscreteModalSolution:
    partition: TimePartition
    coeffs: np.ndarray

    @property
    def nodes(self) -> np.ndarray:
        return self.partition.quadratic_nodes()

    def max_nodal_error(self, exact: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.max(np.abs(self.coeffs - exact(self.nodes))))


def discrete_modal_solve(
    lam: float,
    beta: float,
    partition: TimePartition,
    alpha0: float = 1.0,
    v0: float = 0.0,
    forcing: Forcing | None = None,
) -> DiscreteModalSolution:
    """Quadratic Petrov-Galerkin solution of the modal equation.

    Solves ``(-A_tt + beta A_t + lam M_t) a = F`` where ``F`` holds the load,
    the lift of ``alpha0`` and ``v0`` tested at ``t = 0``.  Returned
    coefficients include the prescribed value at ``t = 0``.
    """
    if lam < 0 or beta < 0:
        raise ValueError("lam and beta must be nonnegative")
    tm = assemble_temporal(partition)
    K = -tm.A_tt + beta * tm.A_t + lam * tm.M_t
    att0, at0, m0 = initial_row_columns(partition)
    rhs = modal_load(partition, forcing) - alpha0 * (-att0 + beta * at0 + lam * m0)
    rhs[0] += v0
    a = lu_solve_dense(*lu_factor_dense(K), rhs)
    if not np.all(np.isfinite(a)):
        raise SingularMatrixError("discrete modal system produced non-finite values")
    return DiscreteModalSolution(partition, np.concatenate([[alpha0], a]))
