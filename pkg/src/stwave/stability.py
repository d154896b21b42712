"""Stability of the quadratic-in-time scheme for a single spatial mode.

Projecting the discrete system onto a generalized eigenvector of
``(A_xx, M_x)`` with eigenvalue ``lam`` leaves a scalar recursion in the
quadratic time coefficients.  Grouping the two coefficients of each time
element, ``z_k = (u_{2k-1}, u_{2k})``, gives the two-step scheme

    A z_k = B1 z_{k-1} + B2 z_{k-2}

whose matrices depend only on ``q = lam * h_t**2``.  The scheme is stable
when every eigenvalue of the companion matrix has real part of modulus at
most one.
"""

from __future__ import annotations

import csv
import functools
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import mpmath
import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from stwave.mesh import MeshError, TriMesh

STABILITY_TOL = 1e-12
NOMINAL_BAND = (10.0, 12.0)
NOMINAL_LIMIT = 60.0
CRITERIA = ("strict_no_band", "relaxed")


class StabilityError(ArithmeticError):
    """Singular recursion matrix or failed eigenvalue iteration."""


@dataclass(frozen=True)
class TwoStepMatrices:
    """Coefficient matrices of the two-step recursion for ``q = lam * h_t**2``."""

    q: float

    @property
    def a(self) -> float:
        return 8 + self.q / 5

    @property
    def b(self) -> float:
        return -16 + 8 * self.q / 5

    @property
    def c(self) -> float:
        return -1 - self.q / 10

    @property
    def d(self) -> float:
        return 14 - 4 * self.q / 5

    @property
    def A(self) -> np.ndarray:
        return np.array([[self.a, self.c], [self.b, self.a]])

    @property
    def B1(self) -> np.ndarray:
        return np.array([[-self.a, self.d], [0.0, -self.a]])

    @property
    def B2(self) -> np.ndarray:
        return np.array([[0.0, 1 + self.q / 10], [0.0, 0.0]])

    @property
    def determinant(self) -> float:
        return self.a**2 - self.b * self.c

    def _check(self) -> None:
        if self.determinant == 0:
            raise StabilityError(f"recursion matrix A is singular at q={self.q}")

    @property
    def A_sys(self) -> np.ndarray:
        """Companion matrix mapping ``(z_{k-2}, z_{k-1})`` to ``(z_{k-1}, z_k)``."""
        self._check()
        A = self.A
        out = np.zeros((4, 4))
        out[:2, 2:] = np.eye(2)
        out[2:, :2] = np.linalg.solve(A, self.B2)
        out[2:, 2:] = np.linalg.solve(A, self.B1)
        return out

    def initial_pair(self, u0: float) -> np.ndarray:
        """``(u_1, u_2)`` produced by the first time element from ``u_0``."""
        self._check()
        rhs = np.array([7 - 2 * self.q / 5, -8 - self.q / 5]) * u0
        return np.linalg.solve(self.A, rhs)


def closed_form_eigenvalues(q: float) -> tuple[complex, complex]:
    """The two nonzero eigenvalues of the companion matrix."""
    if q < 0:
        raise ValueError(f"q must be nonnegative, got {q}")
    m = TwoStepMatrices(float(q))
    a, b, c, d = m.a, m.b, m.c, m.d
    den = 2 * (a * a - b * c)
    if den == 0:
        raise StabilityError(f"recursion matrix A is singular at q={q}")
    root = np.sqrt(complex(b * (2 * c + d) * (4 * a * a - 2 * b * c + b * d)))
    head = -2 * a * a - b * d
    return complex((head + root) / den), complex((head - root) / den)


def numerical_eigenvalues(q: float, digits: int | None = 40) -> np.ndarray:
    """All four eigenvalues of the companion matrix, sorted by modulus.

    The matrix is defective at some ``q`` (double eigenvalues at 0, 12, 60),
    where double precision only resolves eigenvalues to about ``sqrt(eps)``.
    By default the eigenproblem is therefore solved in ``digits`` decimal
    digits; ``digits=None`` uses LAPACK in double precision.
    """
    if q < 0:
        raise ValueError(f"q must be nonnegative, got {q}")
    m = TwoStepMatrices(float(q))
    if digits is None:
        ev = np.linalg.eigvals(m.A_sys)
    else:
        m._check()
        with mpmath.workdps(digits):
            Ainv = mpmath.matrix(m.A.tolist()) ** -1
            low = [Ainv * mpmath.matrix(B.tolist()) for B in (m.B2, m.B1)]
            S = mpmath.zeros(4, 4)
            S[0, 2] = S[1, 3] = 1
            for i in range(2):
                for j in range(2):
                    S[2 + i, j] = low[0][i, j]
                    S[2 + i, 2 + j] = low[1][i, j]
            ev = np.array([complex(v) for v in mpmath.eig(S, left=False, right=False)])
    return ev[np.argsort(np.abs(ev), kind="stable")]


def _max_abs_real(q: float) -> float:
    return max(abs(lam.real) for lam in closed_form_eigenvalues(q))


def _band_excess(q: float) -> float:
    return _max_abs_real(q) - 1.0


def measured_band(lo: float = 5.0, hi: float = 30.0, step: float = 0.01) -> tuple[float, float]:
    """Edges of the unstable interval below the main limit, located by bracketing and root finding."""
    grid = np.arange(lo, hi + step / 2, step)
    bad = np.array([_band_excess(q) > STABILITY_TOL for q in grid])
    if not bad.any():
        raise StabilityError(f"no unstable band found in [{lo}, {hi}]")
    first = int(np.argmax(bad))
    last = first
    while last + 1 < len(grid) and bad[last + 1]:
        last += 1
    left = grid[first - 1] if first > 0 else grid[first]
    right = grid[last + 1] if last + 1 < len(grid) else grid[last]
    mid_l, mid_r = grid[first], grid[last]
    # max |Re| - 1 touches zero at the edges; bisection on the sign of the excess
    edge_l = _bisect_edge(left, mid_l)
    edge_r = _bisect_edge(right, mid_r)
    return edge_l, edge_r


def _bisect_edge(good: float, bad: float, iters: int = 80) -> float:
    for _ in range(iters):
        mid = 0.5 * (good + bad)
        if _band_excess(mid) > STABILITY_TOL:
            bad = mid
        else:
            good = mid
    return 0.5 * (good + bad)


def measured_limit(lo: float = 30.0, hi: float = 100.0) -> float:
    """The largest stable ``q`` above the band, by root finding on ``max|Re| - 1``."""
    return float(scipy.optimize.brentq(_band_excess, lo, hi, xtol=1e-13))


def classify(q: float, criterion: str = "strict_no_band", nominal: bool = False) -> bool:
    """``True`` if the recursion is stable at ``q``.

    The measured verdict compares the closed-form ``max|Re lam|`` with
    ``1 + STABILITY_TOL``.  ``"relaxed"`` additionally accepts the
    negative-real band mode below the main limit.  With ``nominal=True``
    the nominal thresholds (limit 60, band [10, 12]) are used instead.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}, expected one of {CRITERIA}")
    if q < 0:
        raise ValueError(f"q must be nonnegative, got {q}")
    if nominal:
        if q > NOMINAL_LIMIT:
            return False
        return criterion == "relaxed" or not (NOMINAL_BAND[0] <= q <= NOMINAL_BAND[1])
    stable = bool(_max_abs_real(q) <= 1 + STABILITY_TOL)
    if stable or criterion == "strict_no_band":
        return stable
    lo, hi = _default_band()
    return bool(lo <= q <= hi)


@functools.lru_cache(maxsize=None)
def _default_band() -> tuple[float, float]:
    return measured_band()


@dataclass(frozen=True)
class StabilityReport:
    q: float
    eigenvalues: np.ndarray
    max_abs_real: float
    spectral_radius: float
    stable_strict: bool
    stable_relaxed: bool
    tolerance: float = STABILITY_TOL


def report(q: float, digits: int | None = 40) -> StabilityReport:
    ev = numerical_eigenvalues(q, digits)
    lam = closed_form_eigenvalues(q)
    return StabilityReport(
        q=float(q),
        eigenvalues=ev,
        max_abs_real=max(abs(x.real) for x in lam),
        spectral_radius=max(abs(x) for x in lam),
        stable_strict=classify(q, "strict_no_band"),
        stable_relaxed=classify(q, "relaxed"),
    )


@dataclass(frozen=True)
class RecursionRun:
    trajectory: np.ndarray
    growth_factor: float
    saturated: bool

    @property
    def stable(self) -> bool:
        return not self.saturated and self.growth_factor <= 1 + 1e-4


def simulate_recursion(q: float, n_steps: int, u0: float = 1.0, limit: float = 1e150) -> RecursionRun:
    """Iterate the companion matrix from ``u_{-1} = 0``, ``u_0`` and the first-element pair.

    ``trajectory[k]`` is the state ``Y_k``.  The growth factor compares the
    largest state norm over the second half of the run with the largest over
    the first half, ``(max_late / max_early) ** (1 / (n - m))`` with
    ``m = n // 2``; it equals ``rho`` for pure growth ``rho**k`` and stays near
    one for bounded oscillation.  Iteration stops early, with
    ``saturated=True``, once the state norm exceeds ``limit``.
    """
    if n_steps < 2:
        raise ValueError("need at least two steps")
    m = TwoStepMatrices(float(q))
    S = m.A_sys
    Y = np.empty((n_steps + 1, 4))
    Y[0] = 0.0
    Y[1] = np.concatenate([[0.0, u0], m.initial_pair(u0)])
    saturated = False
    last = n_steps
    for k in range(2, n_steps + 1):
        Y[k] = S @ Y[k - 1]
        if not np.all(np.isfinite(Y[k])) or np.linalg.norm(Y[k]) > limit:
            saturated = True
            last = k
            break
    Y = Y[: last + 1]
    if saturated:
        return RecursionRun(Y, math.inf, True)
    norms = np.linalg.norm(Y[1:], axis=1)
    half = len(norms) // 2
    early, late = norms[:half].max(), norms[half:].max()
    if early == 0:
        return RecursionRun(Y, 0.0, False)
    growth = (late / early) ** (1.0 / (len(norms) - half))
    return RecursionRun(Y, float(growth), False)


@dataclass(frozen=True)
class CflBounds:
    c_I: float

    @property
    def ratio_strict(self) -> float:
        return math.sqrt(10.0 / self.c_I)

    @property
    def ratio_relaxed(self) -> float:
        return math.sqrt(60.0 / self.c_I)


def cfl_bounds(c_I: float) -> CflBounds:
    if not c_I > 0:
        raise ValueError(f"c_I must be positive, got {c_I}")
    return CflBounds(float(c_I))


def inverse_inequality_constant(mesh: TriMesh) -> float:
    """Constant ``c_I`` with ``|curl u|^2 <= c_I h_max^-2 |u|^2`` on edge elements.

    Elementwise value ``18 lam_max(J J^T) / (2 |det J|) (h_max / h_l)^2`` with
    ``h_l = sqrt(area)`` and ``J`` the affine map from the vertex giving the
    smallest ``lam_max``.
    """
    X = mesh.triangle_coords()
    best = np.full(len(X), np.inf)
    det = None
    for v in range(3):
        p, q1, q2 = X[:, v], X[:, (v + 1) % 3], X[:, (v + 2) % 3]
        J = np.stack([q1 - p, q2 - p], axis=-1)
        det = np.abs(np.linalg.det(J))
        lam = np.linalg.eigvalsh(J @ np.swapaxes(J, 1, 2))[:, -1]
        best = np.minimum(best, lam)
    if np.any(det <= 0):
        raise MeshError("degenerate triangle")
    h = np.sqrt(0.5 * det)
    return float(np.max(18 * best / det * (h.max() / h) ** 2))


def inverse_inequality_fallback(c_F: float) -> float:
    """Shape-regularity bound ``18 c_F^2 / pi``."""
    return 18.0 * c_F**2 / math.pi


def max_generalized_eigenvalue(A_xx, M_x, tol: float = 1e-10, maxiter: int | None = None) -> float:
    """Largest ``lam`` with ``A_xx v = lam M_x v`` (Lanczos)."""
    A = sp.csr_matrix(A_xx)
    M = sp.csc_matrix(M_x)
    n = A.shape[0]
    if n <= 50:
        return float(scipy.linalg.eigh(A.toarray(), M.toarray(), eigvals_only=True)[-1])
    try:
        val = spla.eigsh(A, k=1, M=M, which="LA", tol=tol, maxiter=maxiter, return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise StabilityError("generalized eigenvalue iteration did not converge") from exc
    return float(val[0])


SWEEP_HEADER = ("q", "re_lambda_max", "abs_lambda_max", "verdict_strict", "verdict_relaxed")


def sweep(qs: Iterable[float], digits: int | None = None) -> list[StabilityReport]:
    """Reports for each ``q`` where the recursion matrix is invertible."""
    out = []
    for q in qs:
        m = TwoStepMatrices(float(q))
        if m.determinant == 0:
            continue
        out.append(report(q, digits))
    return out


def sweep_csv(reports: Sequence[StabilityReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in reports:
        w.writerow(
            [
                f"{r.q:.6g}",
                f"{r.max_abs_real:.12e}",
                f"{r.spectral_radius:.12e}",
                "stable" if r.stable_strict else "unstable",
                "stable" if r.stable_relaxed else "unstable",
            ]
        )
    return buf.getvalue()


def q_grid(q_max: float = 100.0, step: float = 0.1) -> np.ndarray:
    n = int(round(q_max / step))
    return np.round(np.arange(n + 1) * step, 10)
