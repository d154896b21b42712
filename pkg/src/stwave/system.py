"""Assembly and solution of the space-time Galerkin-Petrov system.

The unknowns are ordered time-major: block ``kappa`` (trial node
``1 .. 2N``) holds the coefficients of all free Nedelec DOFs.  The system
matrix is ``-A_tt (x) M_x + A_t (x) M_x^sigma + M_t (x) A_xx``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from stwave import linalg
from stwave.linalg import KroneckerTerm, kron_sum
from stwave.mesh import TriMesh
from stwave.quadrature import gauss_interval, triangle_rule
from stwave.spatial import (
    EdgeDofMap,
    MaterialModel,
    SpatialMatrices,
    assemble_nedelec_rt_mass,
    assemble_rt_mass,
    assemble_spatial,
    evaluate_nedelec,
    load_vector,
    nedelec_interpolate,
    rt_values,
    whitney_values,
)
from stwave.temporal import (
    TemporalMatrices,
    TimePartition,
    assemble_temporal,
    find_element,
    initial_row_columns,
    linear_mass,
    quadratic_basis,
    quadratic_linear_mass,
)

logger = logging.getLogger(__name__)

VectorField = Callable[[np.ndarray], np.ndarray]
SpaceTimeField = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _zero_field(x):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass
class ProblemData:
    """Mesh, time partition, material and data of one space-time problem.

    ``j_a(t, x)`` takes times ``(n,)`` and points ``(n, 2)`` and returns
    ``(n, 2)``; ``phi(x)`` and ``psi(x)`` take ``(n, 2)`` points.
    """

    mesh: TriMesh
    partition: TimePartition
    material: MaterialModel = field(default_factory=MaterialModel)
    j_a: SpaceTimeField | None = None
    phi: VectorField | None = None
    psi: VectorField | None = None


@dataclass(frozen=True)
class ProjectedSource:
    """Coefficients of the L2(Q) projection onto S1 (x) RT0, shape ``(N+1, n_edges)``."""

    coeffs: np.ndarray


@dataclass
class SpaceTimeSystem:
    K: sp.csr_matrix
    rhs: np.ndarray
    source: np.ndarray
    lift: np.ndarray
    initial: np.ndarray
    temporal: TemporalMatrices
    spatial: SpatialMatrices
    dofmap: EdgeDofMap

    @property
    def n_dofs(self) -> int:
        return self.K.shape[0]


@dataclass
class SolutionCoefficients:
    """Nodal-in-time Nedelec coefficients, ``(2N+1, n_free)``; row 0 is the prescribed initial block."""

    mesh: TriMesh
    partition: TimePartition
    dofmap: EdgeDofMap
    coeffs: np.ndarray
    residual: float = 0.0

    @property
    def n_dofs(self) -> int:
        return self.coeffs[1:].size

    def all_edges(self) -> np.ndarray:
        """Coefficients over all edges (boundary entries zero), ``(2N+1, n_edges)``."""
        return self.dofmap.extend(self.coeffs)

    def evaluate(self, t: float, x) -> tuple[np.ndarray, np.ndarray, float]:
        return evaluate(self, t, x)

    def to_csv(self) -> str:
        lines = ["kappa,k,value"]
        for kappa, row in enumerate(self.coeffs):
            lines.extend(f"{kappa},{k},{v:.17g}" for k, v in enumerate(row))
        return "\n".join(lines) + "\n"


# --- right-hand side ---------------------------------------------------------


def source_moments(
    j_a: SpaceTimeField,
    mesh: TriMesh,
    partition: TimePartition,
    space_degree: int = 8,
    time_points: int = 5,
) -> np.ndarray:
    """``(j_a, phi1_m psi_RT_e)_{L2(Q)}`` for all hats ``m`` and edges ``e``."""
    coords = mesh.triangle_coords()
    area, _ = mesh.geometry()
    signs = mesh.triangle_edge_signs.astype(float)
    bary, qw = triangle_rule(space_degree)
    xq = np.einsum("qi,tid->tqd", bary, coords)
    psi = rt_values(bary, coords, area, signs)  # (nt, nq, 3, 2)
    sg, wg = gauss_interval(time_points)
    nt, nq = xq.shape[:2]
    xflat = xq.reshape(-1, 2)
    B = np.zeros((partition.n_elements + 1, mesh.n_edges))
    for e, (t0, h) in enumerate(zip(partition.t_nodes[:-1], partition.h)):
        for s, w in zip(sg, wg):
            jv = np.asarray(j_a(np.full(len(xflat), t0 + s * h), xflat), dtype=float).reshape(nt, nq, 2)
            elem = np.einsum("q,t,tqd,tqkd->tk", qw, area, jv, psi)
            r = np.zeros(mesh.n_edges)
            np.add.at(r, mesh.triangle_edges.ravel(), elem.ravel())
            B[e] += w * h * (1 - s) * r
            B[e + 1] += w * h * s * r
    return B


def project_rhs_rt(
    j_a: SpaceTimeField | None,
    mesh: TriMesh,
    partition: TimePartition,
    space_degree: int = 8,
    time_points: int = 5,
) -> ProjectedSource:
    """L2(Q) projection of ``j_a`` onto piecewise linear time (x) lowest-order RT space."""
    n_hat = partition.n_elements + 1
    if j_a is None:
        return ProjectedSource(np.zeros((n_hat, mesh.n_edges)))
    B = source_moments(j_a, mesh, partition, space_degree, time_points)
    M1 = linear_mass(partition)
    C = np.linalg.solve(M1, B)
    lu = spla.splu(sp.csc_matrix(assemble_rt_mass(mesh)))
    C = lu.solve(np.ascontiguousarray(C.T)).T
    return ProjectedSource(C)


PSI_TRACES = ("quadratic", "linear")


def initial_test_trace(partition: TimePartition, kind: str = "quadratic") -> np.ndarray:
    """Values at t = 0 of the test functions weighting the initial-velocity term.

    ``"quadratic"`` uses the quadratic test basis, ``"linear"`` the hat
    functions of the time nodes.  Both equal one for the first test function
    and zero for all others.
    """
    n = partition.n_dofs
    if kind == "quadratic":
        val, _ = quadratic_basis(np.array([0.0]))
        out = np.zeros(n + 1)
        out[:3] = val[0]
        return out[:n]
    if kind == "linear":
        out = np.zeros(n)
        out[0] = 1.0
        return out
    raise ValueError(f"unknown test trace {kind!r}, expected one of {PSI_TRACES}")


def assemble_rhs(
    projection: ProjectedSource,
    mesh: TriMesh,
    partition: TimePartition,
    dofmap: EdgeDofMap | None = None,
    psi: VectorField | None = None,
    material: MaterialModel | None = None,
    degree: int = 6,
    psi_trace: str = "quadratic",
) -> np.ndarray:
    """Source vector ``f[l, k] = (Pi j, phi2_l psi_k) + phi_l(0) (eps psi, psi_k)``, flattened.

    The initial-velocity term comes from integrating ``(eps d2A/dt2, v)`` by
    parts with ``v(T) = 0``; only the first test function is nonzero at t = 0.
    """
    dofmap = dofmap or EdgeDofMap.from_mesh(mesh)
    material = material or MaterialModel()
    Mql = quadratic_linear_mass(partition)  # (2N, N+1)
    Mnrt = assemble_nedelec_rt_mass(mesh, dofmap)  # (n_free, n_edges)
    F = Mql @ (Mnrt @ projection.coeffs.T).T
    if psi is not None:
        trace = initial_test_trace(partition, psi_trace)
        F += np.outer(trace, load_vector(mesh, psi, weight=material.epsilon, degree=degree, dofmap=dofmap))
    return F.ravel()


def interpolate_initial(mesh: TriMesh, phi: VectorField | None, dofmap: EdgeDofMap, tol: float = 1e-10) -> np.ndarray:
    """Nedelec interpolant of ``phi`` on the free DOFs."""
    if phi is None:
        return np.zeros(dofmap.n_free)
    a = nedelec_interpolate(mesh, phi)
    bnd = np.abs(a[mesh.boundary_edges])
    if bnd.size and bnd.max() > tol:
        logger.warning("initial value has tangential boundary moments up to %.3e; they are dropped", bnd.max())
    return a[dofmap.free_dofs]


def assemble_initial_lift(
    A0: np.ndarray,
    partition: TimePartition,
    spatial: SpatialMatrices,
) -> np.ndarray:
    """Contribution of the prescribed t = 0 block to each test block, flattened."""
    att0, at0, mt0 = initial_row_columns(partition)
    if not np.any(A0):
        return np.zeros(len(att0) * len(A0))
    mx = spatial.M_x @ A0
    ms = spatial.M_x_sigma @ A0
    ax = spatial.A_xx @ A0
    lift = -np.outer(att0, mx) + np.outer(at0, ms) + np.outer(mt0, ax)
    return lift.ravel()


def system_matrix(temporal: TemporalMatrices, spatial: SpatialMatrices) -> sp.csr_matrix:
    terms = [
        KroneckerTerm(temporal.A_tt, spatial.M_x, -1.0),
        KroneckerTerm(temporal.A_t, spatial.M_x_sigma, 1.0),
        KroneckerTerm(temporal.M_t, spatial.A_xx, 1.0),
    ]
    K = kron_sum(terms)
    n = temporal.n * spatial.n
    if K.shape != (n, n):
        raise linalg.DimensionError(f"space-time matrix has shape {K.shape}, expected {(n, n)}")
    return K


def assemble_system(
    problem: ProblemData,
    space_degree: int = 8,
    time_points: int = 5,
    sigma_degree: int | None = 6,
    psi_trace: str = "quadratic",
) -> SpaceTimeSystem:
    mesh, partition, material = problem.mesh, problem.partition, problem.material
    dofmap = EdgeDofMap.from_mesh(mesh)
    temporal = assemble_temporal(partition)
    spatial = assemble_spatial(mesh, material, dofmap, sigma_degree=sigma_degree)
    K = system_matrix(temporal, spatial)
    proj = project_rhs_rt(problem.j_a, mesh, partition, space_degree, time_points)
    source = assemble_rhs(proj, mesh, partition, dofmap, problem.psi, material, psi_trace=psi_trace)
    A0 = interpolate_initial(mesh, problem.phi, dofmap)
    lift = assemble_initial_lift(A0, partition, spatial)
    return SpaceTimeSystem(K, source - lift, source, lift, A0, temporal, spatial, dofmap)


def solve_system(system: SpaceTimeSystem, method: str = "blocked") -> np.ndarray:
    """Solve ``K x = rhs`` directly.

    ``"blocked"`` groups the unknowns of each time element (two quadratic
    nodes) and runs block forward substitution, which is exact because
    ``K`` is block lower triangular in that grouping.  ``"sparse"`` hands
    the whole matrix to the general sparse LU.
    """
    if method == "blocked":
        return linalg.block_lower_solve(system.K, system.rhs, 2 * system.spatial.n)
    if method == "sparse":
        return linalg.sparse_solve(system.K, system.rhs)
    raise ValueError(f"unknown solver method {method!r}")


def solve(problem: ProblemData, method: str = "blocked", **kwargs) -> SolutionCoefficients:
    """Assemble and solve; the returned coefficients include the prescribed t = 0 block."""
    tic = time.perf_counter()
    system = assemble_system(problem, **kwargs)
    x = solve_system(system, method)
    res = linalg.relative_residual(system.K, x, system.rhs)
    logger.info(
        "solved %d dofs in %.2fs, relative residual %.2e",
        system.n_dofs,
        time.perf_counter() - tic,
        res,
    )
    U = np.vstack([system.initial[None, :], x.reshape(system.temporal.n, system.spatial.n)])
    return SolutionCoefficients(problem.mesh, problem.partition, system.dofmap, U, res)


def time_coefficients(sol: SolutionCoefficients, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Spatial coefficient vectors (all edges) of ``A_h(t)`` and ``d/dt A_h(t)``."""
    e, s = find_element(sol.partition, t)
    h = sol.partition.h[e]
    val, der = quadratic_basis(np.array([s]))
    U = sol.all_edges()[2 * e : 2 * e + 3]
    return val[0] @ U, (der[0] / h) @ U


def evaluate(sol: SolutionCoefficients, t: float, x) -> tuple[np.ndarray, np.ndarray, float]:
    """Value, time derivative and scalar curl of ``A_h`` at ``(t, x)``."""
    mesh = sol.mesh
    tri, bary = mesh.locate(np.asarray(x, dtype=float).reshape(1, 2))
    if tri[0] < 0:
        raise ValueError(f"point {x} is outside the spatial domain")
    k = tri[0]
    u, du = time_coefficients(sol, t)
    area, grads = mesh.geometry()
    w = whitney_values(bary, grads[k : k + 1])[0, 0]  # (3, 2)
    signs = mesh.triangle_edge_signs[k]
    c = u[mesh.triangle_edges[k]] * signs
    dc = du[mesh.triangle_edges[k]] * signs
    return c @ w, dc @ w, float(c.sum() / area[k])
