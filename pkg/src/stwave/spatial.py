"""Lowest-order Nedelec (first kind) and Raviart-Thomas elements on triangles.

For local edge ``k`` joining local vertices ``(a, b)`` the Whitney function is
``w_k = s_k (lam_a grad lam_b - lam_b grad lam_a)`` with ``s_k`` the
local-to-global orientation sign.  Its tangential moment along the globally
oriented edge is one and its scalar curl is ``s_k / |K|``.

The matching Raviart-Thomas function is ``s_k (x - p_k) / (2 |K|)``, where
``p_k`` is the vertex opposite edge ``k``.  It equals the Whitney function
rotated clockwise by 90 degrees, so its unit normal flux is taken along the
clockwise-rotated edge tangent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

from stwave.linalg import DimensionError, as_sparse
from stwave.mesh import LOCAL_EDGES, MeshError, TriMesh
from stwave.quadrature import triangle_rule

Field = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]

_A = np.array([e[0] for e in LOCAL_EDGES])
_B = np.array([e[1] for e in LOCAL_EDGES])


def eval_tensor(field: Field, points: np.ndarray) -> np.ndarray:
    """Evaluate a scalar or 2x2 material field at ``points`` (..., 2) -> (..., 2, 2)."""
    shape = points.shape[:-1]
    if callable(field):
        val = np.asarray(field(points.reshape(-1, 2)), dtype=float)
        if val.ndim == 1:
            val = val[:, None, None] * np.eye(2)
        return val.reshape(shape + (2, 2))
    val = np.asarray(field, dtype=float)
    if val.ndim == 0:
        val = val * np.eye(2)
    return np.broadcast_to(val, shape + (2, 2))


def eval_scalar(field: Field, points: np.ndarray) -> np.ndarray:
    shape = points.shape[:-1]
    if callable(field):
        return np.asarray(field(points.reshape(-1, 2)), dtype=float).reshape(shape)
    return np.broadcast_to(np.asarray(field, dtype=float), shape)


@dataclass(frozen=True)
class MaterialModel:
    """Permittivity tensor, scalar inverse permeability and conductivity tensor.

    Each field is a constant (scalar or 2x2) or a callable mapping an
    ``(n, 2)`` point array to ``(n,)`` or ``(n, 2, 2)`` values.
    """

    epsilon: Field = 1.0
    mu_inverse: Field = 1.0
    sigma: Field = 0.0

    @property
    def has_sigma(self) -> bool:
        if callable(self.sigma):
            return True
        return bool(np.any(np.asarray(self.sigma) != 0))

    def check(self, points: np.ndarray) -> None:
        """Raise if positivity assumptions fail at ``points``."""
        eps = eval_tensor(self.epsilon, points)
        if np.linalg.eigvalsh(0.5 * (eps + np.swapaxes(eps, -1, -2))).min() <= 0:
            raise ValueError("permittivity is not positive definite")
        if eval_scalar(self.mu_inverse, points).min() <= 0:
            raise ValueError("inverse permeability must be positive")
        sig = eval_tensor(self.sigma, points)
        if np.linalg.eigvalsh(0.5 * (sig + np.swapaxes(sig, -1, -2))).min() < -1e-14:
            raise ValueError("conductivity must be positive semidefinite")


def diamond_indicator(center=(0.5, 0.5), radius: float = 0.15, value: float = 1.0):
    """Conductivity ``value`` on ``{|x - cx| + |y - cy| <= radius}`` and zero elsewhere."""
    cx, cy = center

    def sigma(x: np.ndarray) -> np.ndarray:
        inside = np.abs(x[:, 0] - cx) + np.abs(x[:, 1] - cy) <= radius + 1e-14
        return np.where(inside, value, 0.0)

    return sigma


@dataclass(frozen=True)
class EdgeDofMap:
    """Free Nedelec DOFs: interior edges (zero tangential trace on the boundary)."""

    free_dofs: np.ndarray
    n_edges: int

    @classmethod
    def from_mesh(cls, mesh: TriMesh) -> "EdgeDofMap":
        return cls(np.flatnonzero(~mesh.boundary_edges), mesh.n_edges)

    @property
    def n_free(self) -> int:
        return len(self.free_dofs)

    def global_to_free(self) -> np.ndarray:
        g = np.full(self.n_edges, -1)
        g[self.free_dofs] = np.arange(self.n_free)
        return g

    def extend(self, u_free: np.ndarray) -> np.ndarray:
        """Embed free coefficients (last axis) into all edges, boundary entries zero."""
        u_free = np.asarray(u_free)
        out = np.zeros(u_free.shape[:-1] + (self.n_edges,))
        out[..., self.free_dofs] = u_free
        return out


@dataclass(frozen=True)
class SpatialMatrices:
    """Curl-curl stiffness, eps-mass and sigma-mass restricted to the free DOFs."""

    A_xx: sp.csr_matrix
    M_x: sp.csr_matrix
    M_x_sigma: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.A_xx.shape[0]


# --- element level -----------------------------------------------------------


def _triangle_geometry(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Areas ``(nt,)`` and barycentric gradients ``(nt, 3, 2)`` of ``(nt, 3, 2)`` coordinates."""
    d1 = coords[:, 1] - coords[:, 0]
    d2 = coords[:, 2] - coords[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    if np.any(area <= 0):
        raise MeshError("degenerate or clockwise triangle")
    grads = np.empty(coords.shape)
    for i in range(3):
        a, b = coords[:, (i + 1) % 3], coords[:, (i + 2) % 3]
        grads[:, i, 0] = (a[:, 1] - b[:, 1]) / (2 * area)
        grads[:, i, 1] = (b[:, 0] - a[:, 0]) / (2 * area)
    return area, grads


def whitney_values(bary: np.ndarray, grads: np.ndarray, signs: np.ndarray | None = None) -> np.ndarray:
    """Whitney functions at barycentric points: ``(nt, nq, 3, 2)``."""
    lam_a = bary[:, _A]  # (nq, 3)
    lam_b = bary[:, _B]
    ga = grads[:, _A]  # (nt, 3, 2)
    gb = grads[:, _B]
    w = lam_a[None, :, :, None] * gb[:, None] - lam_b[None, :, :, None] * ga[:, None]
    if signs is not None:
        w = w * signs[:, None, :, None]
    return w


def whitney_curls(area: np.ndarray, signs: np.ndarray | None = None) -> np.ndarray:
    """Scalar curls ``(nt, 3)``; constant on each triangle."""
    c = np.broadcast_to((1.0 / area)[:, None], (len(area), 3)).copy()
    if signs is not None:
        c = c * signs
    return c


def rt_values(bary: np.ndarray, coords: np.ndarray, area: np.ndarray, signs: np.ndarray | None = None) -> np.ndarray:
    """Raviart-Thomas functions at barycentric points: ``(nt, nq, 3, 2)``."""
    x = np.einsum("qi,tid->tqd", bary, coords)
    v = (x[:, :, None, :] - coords[:, None, :, :]) / (2 * area)[:, None, None, None]
    if signs is not None:
        v = v * signs[:, None, :, None]
    return v


def _weighted_mass(vals: np.ndarray, weight: np.ndarray, qw: np.ndarray, area: np.ndarray) -> np.ndarray:
    # vals (nt, nq, 3, 2), weight (nt, nq, 2, 2)
    return np.einsum("q,t,tqid,tqde,tqje->tij", qw, area, vals, weight, vals)


def _points(bary: np.ndarray, coords: np.ndarray) -> np.ndarray:
    return np.einsum("qi,tid->tqd", bary, coords)


def nedelec_element_matrices(
    coords: np.ndarray,
    material: MaterialModel | None = None,
    signs: np.ndarray | None = None,
    degree: int = 2,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Curl-curl, eps-mass and sigma-mass 3x3 matrices of one triangle.

    ``coords`` is ``(3, 2)`` counterclockwise; ``signs`` the per-edge
    orientation (default all +1).  Material coefficients are sampled at
    the quadrature points of a rule of the given degree.
    """
    material = material or MaterialModel()
    c = np.asarray(coords, dtype=float)[None]
    s = None if signs is None else np.asarray(signs, dtype=float)[None]
    K, M, Ms = _element_matrices(c, material, s, degree)
    return K[0], M[0], Ms[0]


def _element_matrices(coords, material, signs, degree, sigma_degree=None):
    area, grads = _triangle_geometry(coords)
    bary, qw = triangle_rule(degree)
    pts = _points(bary, coords)
    w = whitney_values(bary, grads, signs)
    curl = whitney_curls(area, signs)
    # mu^-1 at quadrature points, integrated against the constant curls
    muinv = np.einsum("q,tq->t", qw, eval_scalar(material.mu_inverse, pts))
    K = (area * muinv)[:, None, None] * curl[:, :, None] * curl[:, None, :]
    M = _weighted_mass(w, eval_tensor(material.epsilon, pts), qw, area)
    if material.has_sigma:
        if sigma_degree is not None and sigma_degree != degree:
            bary_s, qw_s = triangle_rule(sigma_degree)
            pts_s = _points(bary_s, coords)
            w_s = whitney_values(bary_s, grads, signs)
            Ms = _weighted_mass(w_s, eval_tensor(material.sigma, pts_s), qw_s, area)
        else:
            Ms = _weighted_mass(w, eval_tensor(material.sigma, pts), qw, area)
    else:
        Ms = np.zeros_like(M)
    return K, M, Ms


def rt_element_matrix(coords: np.ndarray, signs: np.ndarray | None = None) -> np.ndarray:
    """3x3 Raviart-Thomas mass matrix of one triangle."""
    c = np.asarray(coords, dtype=float)[None]
    s = None if signs is None else np.asarray(signs, dtype=float)[None]
    return _rt_element_matrices(c, s)[0]


def _rt_element_matrices(coords, signs):
    area, _ = _triangle_geometry(coords)
    bary, qw = triangle_rule(2)
    v = rt_values(bary, coords, area, signs)
    return np.einsum("q,t,tqid,tqjd->tij", qw, area, v, v)


# --- global assembly ---------------------------------------------------------


def scatter(mesh: TriMesh, elem: np.ndarray, n_rows_cols: tuple[int, int] | None = None) -> sp.csr_matrix:
    """Sum ``(nt, 3, 3)`` element matrices into an edge-by-edge CSR matrix."""
    te = mesh.triangle_edges
    rows = np.broadcast_to(te[:, :, None], elem.shape).ravel()
    cols = np.broadcast_to(te[:, None, :], elem.shape).ravel()
    shape = n_rows_cols or (mesh.n_edges, mesh.n_edges)
    return as_sparse(sp.coo_matrix((elem.ravel(), (rows, cols)), shape=shape))


def restrict(A: sp.spmatrix, dofmap: EdgeDofMap) -> sp.csr_matrix:
    f = dofmap.free_dofs
    return as_sparse(sp.csr_matrix(A)[f][:, f])


def assemble_spatial(
    mesh: TriMesh,
    material: MaterialModel | None = None,
    dofmap: EdgeDofMap | None = None,
    degree: int = 2,
    sigma_degree: int | None = 6,
) -> SpatialMatrices:
    """Global ``A_xx``, ``M_x`` and ``M_x_sigma`` on the free (interior-edge) DOFs.

    The conductivity is sampled pointwise at the quadrature nodes of a rule of
    ``sigma_degree`` so that elements cut by the edge of its support get a
    partial contribution.
    """
    material = material or MaterialModel()
    dofmap = dofmap or EdgeDofMap.from_mesh(mesh)
    if dofmap.n_edges != mesh.n_edges:
        raise DimensionError(f"dofmap has {dofmap.n_edges} edges, mesh has {mesh.n_edges}")
    coords = mesh.triangle_coords()
    signs = mesh.triangle_edge_signs.astype(float)
    K, M, Ms = _element_matrices(coords, material, signs, degree, sigma_degree)
    return SpatialMatrices(
        A_xx=restrict(scatter(mesh, K), dofmap),
        M_x=restrict(scatter(mesh, M), dofmap),
        M_x_sigma=restrict(scatter(mesh, Ms), dofmap),
    )


def assemble_rt_mass(mesh: TriMesh) -> sp.csr_matrix:
    """Raviart-Thomas mass matrix over all edges (no boundary elimination)."""
    coords = mesh.triangle_coords()
    signs = mesh.triangle_edge_signs.astype(float)
    return scatter(mesh, _rt_element_matrices(coords, signs))


def assemble_nedelec_rt_mass(mesh: TriMesh, dofmap: EdgeDofMap | None = None) -> sp.csr_matrix:
    """Mixed matrix ``(psi_RT_e, psi_N_l)``: rows free Nedelec DOFs, columns all RT DOFs."""
    dofmap = dofmap or EdgeDofMap.from_mesh(mesh)
    coords = mesh.triangle_coords()
    area, grads = _triangle_geometry(coords)
    signs = mesh.triangle_edge_signs.astype(float)
    bary, qw = triangle_rule(2)
    w = whitney_values(bary, grads, signs)
    v = rt_values(bary, coords, area, signs)
    elem = np.einsum("q,t,tqid,tqjd->tij", qw, area, w, v)
    A = scatter(mesh, elem)
    return as_sparse(A[dofmap.free_dofs])


def nedelec_interpolate(mesh: TriMesh, field: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Edge DOFs of ``field``: tangential component at the edge midpoint times edge length.

    Returns coefficients for all edges, using the global edge orientation.
    """
    p0 = mesh.vertices[mesh.edges[:, 0]]
    p1 = mesh.vertices[mesh.edges[:, 1]]
    mid = 0.5 * (p0 + p1)
    vals = np.asarray(field(mid), dtype=float).reshape(-1, 2)
    return np.einsum("ed,ed->e", vals, p1 - p0)


def evaluate_nedelec(mesh: TriMesh, coeffs: np.ndarray, bary: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values ``(nt, nq, 2)`` and curls ``(nt,)`` of an edge-coefficient vector over all edges."""
    area, grads = mesh.geometry()
    c = coeffs[mesh.triangle_edges] * mesh.triangle_edge_signs
    w = whitney_values(bary, grads)
    vals = np.einsum("tqkd,tk->tqd", w, c)
    curl = c.sum(axis=1) / area
    return vals, curl


def load_vector(
    mesh: TriMesh,
    field: Callable[[np.ndarray], np.ndarray],
    weight: Field = 1.0,
    degree: int = 6,
    dofmap: EdgeDofMap | None = None,
) -> np.ndarray:
    """``(weight * field, psi_N_l)`` for the free Nedelec DOFs."""
    dofmap = dofmap or EdgeDofMap.from_mesh(mesh)
    coords = mesh.triangle_coords()
    area, grads = mesh.geometry()
    bary, qw = triangle_rule(degree)
    pts = _points(bary, coords)
    f = np.asarray(field(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape)
    f = np.einsum("tqde,tqe->tqd", eval_tensor(weight, pts), f)
    w = whitney_values(bary, grads, mesh.triangle_edge_signs.astype(float))
    elem = np.einsum("q,t,tqd,tqkd->tk", qw, area, f, w)
    b = np.zeros(mesh.n_edges)
    np.add.at(b, mesh.triangle_edges.ravel(), elem.ravel())
    return b[dofmap.free_dofs]
