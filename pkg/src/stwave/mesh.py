"""Structured triangulations of axis-aligned rectangles.

Every square cell of an ``n x n`` grid is split along its diagonal from the
lower-left to the upper-right corner, so all triangles are congruent
isosceles right triangles.  Edges are numbered globally in lexicographic
order of their (sorted) vertex pairs and oriented from the lower to the
higher vertex index.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

#: Local edge k joins these two local vertices and lies opposite vertex k.
LOCAL_EDGES = ((1, 2), (2, 0), (0, 1))

MAX_TRIANGLES = 50_000_000


class MeshError(ValueError):
    """Invalid mesh parameters or a degenerate element."""


@dataclass(frozen=True)
class TriMesh:
    """An immutable triangle mesh with oriented edges.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    edges : (ne, 2) int array, ``edges[:, 0] < edges[:, 1]``
    triangle_edges : (nt, 3) int array, global index of local edge k
    triangle_edge_signs : (nt, 3) array of +1/-1, local vs. global orientation
    boundary_edges : (ne,) bool array
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    triangle_edges: np.ndarray
    triangle_edge_signs: np.ndarray
    boundary_edges: np.ndarray
    bounds: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)
    n_per_side: int | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_boundary_edges(self) -> int:
        return int(self.boundary_edges.sum())

    def triangle_coords(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape ``(nt, 3, 2)``."""
        return self.vertices[self.triangles]

    def areas(self) -> np.ndarray:
        """Signed areas (positive for counterclockwise triangles)."""
        p = self.triangle_coords()
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def geometry(self) -> tuple[np.ndarray, np.ndarray]:
        """Areas ``(nt,)`` and barycentric gradients ``(nt, 3, 2)``; cached."""
        if "geometry" not in self._cache:
            p = self.triangle_coords()
            area = self.areas()
            if np.any(area <= 0):
                raise MeshError("degenerate or clockwise triangle")
            grads = np.empty((len(p), 3, 2))
            for i in range(3):
                a, b = p[:, (i + 1) % 3], p[:, (i + 2) % 3]
                grads[:, i, 0] = (a[:, 1] - b[:, 1]) / (2 * area)
                grads[:, i, 1] = (b[:, 0] - a[:, 0]) / (2 * area)
            self._cache["geometry"] = (area, grads)
        return self._cache["geometry"]

    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def locate(self, points: np.ndarray, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
        """Triangle index and barycentric coordinates of each point.

        Points outside the mesh get index -1.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        area, grads = self.geometry()
        p0 = self.vertices[self.triangles[:, 0]]
        found = np.full(len(pts), -1)
        bary = np.zeros((len(pts), 3))
        for k, x in enumerate(pts):
            d = x - p0
            l1 = np.einsum("tj,tj->t", grads[:, 1], d)
            l2 = np.einsum("tj,tj->t", grads[:, 2], d)
            l0 = 1.0 - l1 - l2
            lam = np.column_stack([l0, l1, l2])
            inside = np.flatnonzero(lam.min(axis=1) >= -tol)
            if len(inside):
                found[k] = inside[0]
                bary[k] = lam[inside[0]]
        return found, bary

    def to_text(self) -> str:
        """Plain-text dump: ``v x y``, ``t i j k`` and ``e i j b`` lines."""
        lines = [f"v {x:.17g} {y:.17g}" for x, y in self.vertices]
        lines += [f"t {i} {j} {k}" for i, j, k in self.triangles]
        lines += [f"e {i} {j} {int(b)}" for (i, j), b in zip(self.edges, self.boundary_edges)]
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "TriMesh":
        verts, tris = [], []
        for line in text.splitlines():
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append((float(parts[1]), float(parts[2])))
            elif parts[0] == "t":
                tris.append(tuple(int(p) for p in parts[1:4]))
        return from_triangles(np.array(verts), np.array(tris, dtype=np.int64))

    @classmethod
    def read(cls, path: str | Path) -> "TriMesh":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True)
class MeshMetrics:
    h_max: float
    h_min: float
    quasi_uniformity: float
    shape_constant_cF: float


def from_triangles(
    vertices: np.ndarray,
    triangles: np.ndarray,
    bounds: tuple[float, float, float, float] | None = None,
    n_per_side: int | None = None,
) -> TriMesh:
    """Build the oriented edge structure for an arbitrary counterclockwise triangulation."""
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    nv = len(vertices)
    local = np.array(LOCAL_EDGES)
    a = triangles[:, local[:, 0]]
    b = triangles[:, local[:, 1]]
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    keys = (lo * nv + hi).ravel()
    ukeys, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    if counts.max(initial=0) > 2:
        raise MeshError("edge shared by more than two triangles")
    edges = np.column_stack([ukeys // nv, ukeys % nv])
    tri_edges = inverse.reshape(triangles.shape)
    signs = np.where(a < b, 1, -1).astype(np.int8)
    if bounds is None:
        bounds = (
            float(vertices[:, 0].min()),
            float(vertices[:, 0].max()),
            float(vertices[:, 1].min()),
            float(vertices[:, 1].max()),
        )
    mesh = TriMesh(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        triangle_edges=tri_edges,
        triangle_edge_signs=signs,
        boundary_edges=counts == 1,
        bounds=tuple(float(v) for v in bounds),
        n_per_side=n_per_side,
    )
    for arr in (vertices, triangles, edges, tri_edges, signs, mesh.boundary_edges):
        arr.setflags(write=False)
    return mesh


def build_structured_mesh(
    rectangle: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0),
    n_per_side: int = 1,
) -> TriMesh:
    """Triangulate ``[x0, x1] x [y0, y1]`` with ``2 n^2`` right triangles.

    Each grid cell is split along the lower-left to upper-right diagonal.
    """
    x0, x1, y0, y1 = (float(v) for v in rectangle)
    if int(n_per_side) != n_per_side or n_per_side < 1:
        raise MeshError(f"n_per_side must be a positive integer, got {n_per_side!r}")
    if not (x1 > x0 and y1 > y0):
        raise MeshError("rectangle has zero or negative area")
    n = int(n_per_side)
    if 2 * n * n > MAX_TRIANGLES:
        raise MeshError(f"mesh with {2 * n * n} triangles exceeds capacity")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v11 = v00 + n + 2
    v01 = v00 + n + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return from_triangles(vertices, triangles, bounds=(x0, x1, y0, y1), n_per_side=n)


def uniform_refine(
    level: int,
    n0: int = 2,
    rectangle: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0),
) -> TriMesh:
    """Structured mesh after ``level`` uniform bisections of a base mesh with ``n0`` cells per side.

    Red refinement of the structured mesh reproduces the structured mesh with
    twice as many cells, so this simply rebuilds with ``n0 * 2**level``.
    """
    if level < 0:
        raise MeshError("refinement level must be >= 0")
    n = n0 * 2**level
    if 2 * n * n > MAX_TRIANGLES:
        raise MeshError(f"refinement level {level} exceeds mesh capacity")
    return build_structured_mesh(rectangle, n)


def refine(mesh: TriMesh) -> TriMesh:
    """One uniform refinement of a structured mesh."""
    if mesh.n_per_side is None:
        raise MeshError("only structured meshes can be refined")
    return build_structured_mesh(mesh.bounds, 2 * mesh.n_per_side)


def mesh_metrics(mesh: TriMesh) -> MeshMetrics:
    """Local sizes ``h = area**(1/2)`` and the diameter-to-inradius shape constant."""
    area, _ = mesh.geometry()
    h = np.sqrt(area)
    p = mesh.triangle_coords()
    sides = np.stack(
        [np.linalg.norm(p[:, (k + 1) % 3] - p[:, (k + 2) % 3], axis=1) for k in range(3)],
        axis=1,
    )
    inradius = 2 * area / sides.sum(axis=1)
    cF = float(np.max(sides.max(axis=1) / inradius))
    return MeshMetrics(
        h_max=float(h.max()),
        h_min=float(h.min()),
        quasi_uniformity=float(h.max() / h.min()),
        shape_constant_cF=cF,
    )
