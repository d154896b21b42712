"""Manufactured solutions, space-time error norms and convergence studies."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from stwave.linalg import LinalgError
from stwave.mesh import build_structured_mesh
from stwave.quadrature import gauss_interval, triangle_rule
from stwave.spatial import (
    EdgeDofMap,
    MaterialModel,
    assemble_spatial,
    diamond_indicator,
    eval_scalar,
    eval_tensor,
    evaluate_nedelec,
)
from stwave.stability import classify, max_generalized_eigenvalue
from stwave.system import ProblemData, SolutionCoefficients, solve
from stwave.temporal import TimePartition, quadratic_basis

logger = logging.getLogger(__name__)

BLOWUP_THRESHOLD = 1e3


def _bubble(x1, x2):
    return x1 * (1 - x1) * x2 * (1 - x2)


def _swirl(x1, x2):
    return np.stack([x2, -x1], axis=-1)


def _curlcurl_poly(x1, x2):
    # curl curl of x1(1-x1)x2(1-x2)(x2, -x1)
    return np.stack(
        [
            -x1 * (12 * x1 * x2 - 5 * x1 - 10 * x2 + 4),
            x2 * (12 * x1 * x2 - 10 * x1 - 5 * x2 + 4),
        ],
        axis=-1,
    )


def _curl_poly(x1, x2):
    return -x1 * x2 * (6 * x1 * x2 - 5 * x1 - 5 * x2 + 4)


@dataclass(frozen=True)
class ManufacturedCase:
    """An exact solution on ``(0, T) x (0, 1)^2`` with eps = I and mu = 1.

    All callables take times ``(n,)`` and points ``(n, 2)``.
    """

    name: str
    T: float
    exact: Callable
    exact_dt: Callable
    exact_curl: Callable
    source: Callable
    sigma: Callable | float = 0.0

    @property
    def material(self) -> MaterialModel:
        return MaterialModel(epsilon=1.0, mu_inverse=1.0, sigma=self.sigma)


def _a1(T: float = 2.0) -> ManufacturedCase:
    def exact(t, x):
        x1, x2 = x[:, 0], x[:, 1]
        return (t**3 * _bubble(x1, x2))[:, None] * _swirl(x1, x2)

    def exact_dt(t, x):
        x1, x2 = x[:, 0], x[:, 1]
        return (3 * t**2 * _bubble(x1, x2))[:, None] * _swirl(x1, x2)

    def exact_curl(t, x):
        return t**3 * _curl_poly(x[:, 0], x[:, 1])

    def source(t, x):
        x1, x2 = x[:, 0], x[:, 1]
        return (6 * t * _bubble(x1, x2))[:, None] * _swirl(x1, x2) + (t**3)[:, None] * _curlcurl_poly(x1, x2)

    return ManufacturedCase("A1", T, exact, exact_dt, exact_curl, source)


def _a2(T: float = math.sqrt(10.4)) -> ManufacturedCase:
    pi = np.pi

    def exact(t, x):
        x1, x2 = x[:, 0], x[:, 1]
        q2 = x2 * (1 - x2)
        return np.stack([-5 * t**2 * q2 + t**3 * np.sin(pi * x1) * q2, t**2 * x1 * (1 - x1)], axis=-1)

    def exact_dt(t, x):
        x1, x2 = x[:, 0], x[:, 1]
        q2 = x2 * (1 - x2)
        return np.stack([-10 * t * q2 + 3 * t**2 * np.sin(pi * x1) * q2, 2 * t * x1 * (1 - x1)], axis=-1)

    def exact_curl(t, x):
        x1, x2 = x[:, 0], x[:, 1]
        return -(t**2) * (t * np.sin(pi * x1) * (1 - 2 * x2) + 2 * x1 + 10 * x2 - 6)

    def source(t, x):
        x1, x2 = x[:, 0], x[:, 1]
        s, c = np.sin(pi * x1), np.cos(pi * x1)
        return np.stack(
            [
                -10 * (t**2 - x2**2 + x2) + 2 * t**3 * s + 6 * t * s * x2 * (1 - x2),
                2 * (t**2 - x1**2 + x1) + pi * t**3 * (1 - 2 * x2) * c,
            ],
            axis=-1,
        )

    return ManufacturedCase("A2", T, exact, exact_dt, exact_curl, source)


def with_conductivity(case: ManufacturedCase, sigma: Callable | float) -> ManufacturedCase:
    """Same exact solution with conductivity ``sigma``; the source gains ``sigma * dA/dt``."""
    base = case.source
    dt = case.exact_dt

    def source(t, x):
        return base(t, x) + eval_scalar(sigma, x)[:, None] * dt(t, x)

    return replace(case, source=source, sigma=sigma)


def _a3(T: float = 2.0, sigma_value: float = 1.0) -> ManufacturedCase:
    def exact(t, x):
        x1, x2 = x[:, 0], x[:, 1]
        return (t**2 * _bubble(x1, x2))[:, None] * _swirl(x1, x2)

    def exact_dt(t, x):
        x1, x2 = x[:, 0], x[:, 1]
        return (2 * t * _bubble(x1, x2))[:, None] * _swirl(x1, x2)

    def exact_curl(t, x):
        return t**2 * _curl_poly(x[:, 0], x[:, 1])

    def source(t, x):
        x1, x2 = x[:, 0], x[:, 1]
        return (2 * _bubble(x1, x2))[:, None] * _swirl(x1, x2) + (t**2)[:, None] * _curlcurl_poly(x1, x2)

    case = ManufacturedCase("A3", T, exact, exact_dt, exact_curl, source)
    if sigma_value == 0:
        return case
    return with_conductivity(case, diamond_indicator((0.5, 0.5), 0.15, sigma_value))


CASES = {"A1": _a1, "A2": _a2, "A3": _a3}


def get_case(name: str, T: float | None = None, sigma: float | None = None) -> ManufacturedCase:
    """Case by name.  ``sigma`` rescales the conductivity: the diamond value for A3,
    a uniform conductivity for A1 and A2 (which have none by default)."""
    try:
        factory = CASES[name.upper()]
    except KeyError:
        raise ValueError(f"unknown case {name!r}; choose from {sorted(CASES)}") from None
    if sigma is not None and sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    kw = {} if T is None else {"T": T}
    if name.upper() == "A3":
        return factory(**kw) if sigma is None else factory(sigma_value=sigma, **kw)
    case = factory(**kw)
    return case if not sigma else with_conductivity(case, float(sigma))


def make_problem(case: ManufacturedCase, n_per_side: int, n_time: int) -> ProblemData:
    """Problem on the unit square with homogeneous initial data (true for all cases)."""
    mesh = build_structured_mesh((0.0, 1.0, 0.0, 1.0), n_per_side)
    partition = TimePartition.equidistant(case.T, n_time)
    return ProblemData(mesh, partition, case.material, j_a=case.source)


# --- error norms -------------------------------------------------------------


def error_norms(
    sol: SolutionCoefficients,
    case: ManufacturedCase,
    time_points: int = 4,
    space_degree: int = 4,
    material: MaterialModel | None = None,
) -> tuple[float, float]:
    """``||A - A_h||_{L2(Q)}`` and the H(curl;1) seminorm of the error.

    The seminorm is ``sqrt(||d/dt e||^2_eps + ||curl e||^2_{mu^-1})``.
    """
    material = material or case.material
    mesh, part = sol.mesh, sol.partition
    coords = mesh.triangle_coords()
    area, _ = mesh.geometry()
    bary, qw = triangle_rule(space_degree)
    xq = np.einsum("qi,tid->tqd", bary, coords)
    nt, nq = xq.shape[:2]
    xflat = xq.reshape(-1, 2)
    eps = eval_tensor(material.epsilon, xq)
    muinv = eval_scalar(material.mu_inverse, xq)
    U = sol.all_edges()
    sg, wg = gauss_interval(time_points)
    val, der = quadratic_basis(sg)
    l2 = dt2 = curl2 = 0.0
    for e, (t0, h) in enumerate(zip(part.t_nodes[:-1], part.h)):
        Ue = U[2 * e : 2 * e + 3]
        for g in range(len(sg)):
            t = t0 + sg[g] * h
            u = val[g] @ Ue
            du = (der[g] / h) @ Ue
            vh, ch = evaluate_nedelec(mesh, u, bary)
            dvh, _ = evaluate_nedelec(mesh, du, bary)
            tt = np.full(len(xflat), t)
            ev = case.exact(tt, xflat).reshape(nt, nq, 2) - vh
            edv = case.exact_dt(tt, xflat).reshape(nt, nq, 2) - dvh
            ec = case.exact_curl(tt, xflat).reshape(nt, nq) - ch[:, None]
            w = wg[g] * h
            l2 += w * np.einsum("q,t,tqd->", qw, area, ev**2)
            dt2 += w * np.einsum("q,t,tqd,tqde,tqe->", qw, area, edv, eps, edv)
            curl2 += w * np.einsum("q,t,tq->", qw, area, muinv * ec**2)
    return math.sqrt(l2), math.sqrt(dt2 + curl2)


def error_L2Q(sol: SolutionCoefficients, case: ManufacturedCase, **kw) -> float:
    return error_norms(sol, case, **kw)[0]


def error_seminorm(sol: SolutionCoefficients, case: ManufacturedCase, **kw) -> float:
    return error_norms(sol, case, **kw)[1]


def eoc(err_prev: float, err: float, ratio: float = 2.0) -> float:
    """Experimental order of convergence for a mesh size ratio ``h_prev / h``."""
    return (math.log(err_prev) - math.log(err)) / math.log(ratio)


# --- studies -----------------------------------------------------------------


@dataclass
class ConvergenceRow:
    level: int
    h_x: float
    h_t: float
    n_dofs: int
    err_L2: float
    eoc_L2: float | None
    err_semi: float
    eoc_semi: float | None


@dataclass
class ConvergenceTable:
    case: str
    rows: list[ConvergenceRow] = field(default_factory=list)

    def to_csv(self) -> str:
        out = ["level,h_x,h_t,n_dofs,err_L2,eoc_L2,err_semi,eoc_semi"]
        for r in self.rows:
            out.append(
                f"{r.level},{r.h_x:.4f},{r.h_t:.4f},{r.n_dofs},{r.err_L2:.5e},{_fmt(r.eoc_L2)},"
                f"{r.err_semi:.5e},{_fmt(r.eoc_semi)}"
            )
        return "\n".join(out) + "\n"

    def to_markdown(self) -> str:
        out = [
            "| L | h_x | h_t | #fdofs | L2(Q) error | EOC | H(curl;1) error | EOC |",
            "|---|---|---|---|---|---|---|---|",
        ]
        for r in self.rows:
            out.append(
                f"| {r.level} | {r.h_x:.4f} | {r.h_t:.4f} | {r.n_dofs} | {r.err_L2:.5e} | "
                f"{_fmt(r.eoc_L2, '-')} | {r.err_semi:.5e} | {_fmt(r.eoc_semi, '-')} |"
            )
        return "\n".join(out) + "\n"


def _fmt(v: float | None, empty: str = "") -> str:
    return empty if v is None else f"{v:.2f}"


def equal_step_discretization(level: int, T: float = 2.0) -> tuple[int, int]:
    """Cells per side and time elements for level ``level`` of the ``h_t = h_x`` study."""
    n = 2**level
    return n, int(round(T * n))


def run_convergence_study(
    case: ManufacturedCase,
    levels: Sequence[int],
    ht_rule: Callable[[int], tuple[int, int]] | None = None,
) -> ConvergenceTable:
    """Solve on each level and collect both error norms and their EOCs.

    ``ht_rule(level)`` returns ``(cells per side, time elements)``; the default
    pairs ``h_t`` with the cell width ``1/n`` for ``n = 2**level``.
    """
    ht_rule = ht_rule or (lambda L: equal_step_discretization(L, case.T))
    table = ConvergenceTable(case.name)
    prev = None
    for L in levels:
        n, nt = ht_rule(L)
        problem = make_problem(case, n, nt)
        sol = solve(problem)
        el2, esemi = error_norms(sol, case)
        row = ConvergenceRow(
            level=L,
            h_x=1.0 / n,
            h_t=case.T / nt,
            n_dofs=sol.n_dofs,
            err_L2=el2,
            eoc_L2=None if prev is None else eoc(prev.err_L2, el2, (prev.h_x / (1.0 / n))),
            err_semi=esemi,
            eoc_semi=None if prev is None else eoc(prev.err_semi, esemi, (prev.h_x / (1.0 / n))),
        )
        logger.info("level %d: L2 %.5e  semi %.5e", L, el2, esemi)
        table.rows.append(row)
        prev = row
    return table


H_X_MEASURES = ("leg", "sqrt_area")


def mesh_width(n: int, measure: str = "leg") -> float:
    """Mesh size label of the ``n x n`` structured mesh: cell leg ``1/n`` or ``sqrt(triangle area)``."""
    if measure == "leg":
        return 1.0 / n
    if measure == "sqrt_area":
        return 1.0 / (n * math.sqrt(2.0))
    raise ValueError(f"unknown h_x measure {measure!r}, expected one of {H_X_MEASURES}")


def cells_from_width(h_x: float, measure: str = "leg", rtol: float = 0.01) -> int:
    """Inverse of :func:`mesh_width`; rejects widths that do not match an integer grid."""
    n = int(round(mesh_width(1, measure) / h_x))
    if n < 1 or abs(mesh_width(n, measure) - h_x) > rtol * h_x:
        raise ValueError(f"h_x={h_x} does not correspond to a structured mesh ({measure})")
    return n


def steps_from_width(h_t: float, T: float, rtol: float = 0.01) -> int:
    N = int(round(T / h_t))
    if N < 1 or abs(T / N - h_t) > rtol * h_t:
        raise ValueError(f"h_t={h_t} does not divide T={T} into equal steps")
    return N


@dataclass
class CflSweep:
    """Errors on a grid of spatial (rows) and temporal (columns) discretizations."""

    case: str
    T: float
    n_cells: list[int]
    n_steps: list[int]
    h_x: np.ndarray
    h_t: np.ndarray
    err_L2: np.ndarray
    err_semi: np.ndarray
    q_max: np.ndarray
    predicted_stable: np.ndarray

    @property
    def blown_up(self) -> np.ndarray:
        """Cells whose L2 error exceeds ``BLOWUP_THRESHOLD`` times the smallest error of the sweep."""
        finite = self.err_L2[np.isfinite(self.err_L2)]
        ref = finite.min() if finite.size else 1.0
        return ~np.isfinite(self.err_L2) | (self.err_L2 > BLOWUP_THRESHOLD * ref)

    def to_csv(self) -> str:
        out = ["h_x,h_t,n,N,err_L2,err_semi,q_max,predicted_stable,blown_up"]
        blown = self.blown_up
        for i, n in enumerate(self.n_cells):
            for j, N in enumerate(self.n_steps):
                out.append(
                    f"{self.h_x[i]:.4f},{self.h_t[j]:.4f},{n},{N},{self.err_L2[i, j]:.3e},"
                    f"{self.err_semi[i, j]:.3e},{self.q_max[i, j]:.4g},"
                    f"{int(self.predicted_stable[i, j])},{int(blown[i, j])}"
                )
        return "\n".join(out) + "\n"

    def to_markdown(self, norm: str = "L2") -> str:
        err = self.err_L2 if norm == "L2" else self.err_semi
        head = "| h_x \\ h_t | " + " | ".join(f"{h:.4f}" for h in self.h_t) + " |"
        out = [head, "|---" * (len(self.h_t) + 1) + "|"]
        for i in range(len(self.n_cells)):
            out.append(f"| {self.h_x[i]:.4f} | " + " | ".join(f"{e:.3e}" for e in err[i]) + " |")
        return "\n".join(out) + "\n"


def run_cfl_sweep(
    case: ManufacturedCase,
    n_cells: Sequence[int],
    n_steps: Sequence[int],
    T: float | None = None,
    measure: str = "leg",
) -> CflSweep:
    """Solve every (mesh, time step) pair and record errors next to the stability prediction.

    The prediction uses ``q = lam_max(A_xx, M_x) * h_t**2`` with the strict classifier.
    """
    if T is not None and T != case.T:
        case = replace(case, T=T)
    if not n_cells or not n_steps:
        raise ValueError("empty discretization list")
    shape = (len(n_cells), len(n_steps))
    e2 = np.full(shape, np.nan)
    es = np.full(shape, np.nan)
    qm = np.zeros(shape)
    ok = np.zeros(shape, dtype=bool)
    for i, n in enumerate(n_cells):
        mesh = build_structured_mesh(n_per_side=n)
        dm = EdgeDofMap.from_mesh(mesh)
        sp_mats = assemble_spatial(mesh, case.material, dm)
        lam = max_generalized_eigenvalue(sp_mats.A_xx, sp_mats.M_x)
        for j, N in enumerate(n_steps):
            h_t = case.T / N
            qm[i, j] = lam * h_t**2
            ok[i, j] = classify(qm[i, j], "strict_no_band")
            try:
                sol = solve(make_problem(case, n, N))
            except LinalgError as exc:
                logger.warning("cell n=%d N=%d failed: %s", n, N, exc)
                continue
            e2[i, j], es[i, j] = error_norms(sol, case)
            logger.info("n=%d N=%d q=%.3g: L2 %.3e semi %.3e", n, N, qm[i, j], e2[i, j], es[i, j])
    return CflSweep(
        case=case.name,
        T=case.T,
        n_cells=list(n_cells),
        n_steps=list(n_steps),
        h_x=np.array([mesh_width(n, measure) for n in n_cells]),
        h_t=np.array([case.T / N for N in n_steps]),
        err_L2=e2,
        err_semi=es,
        q_max=qm,
        predicted_stable=ok,
    )
