"""Space-time Galerkin-Petrov finite elements for the damped 2D vectorial wave equation.

Quadratic continuous elements in time, lowest-order Nedelec edge elements in
space, a Raviart-Thomas projection of the source term, and a stability
analyzer for the resulting conditionally stable scheme.
"""

from stwave.mesh import TriMesh, MeshMetrics, build_structured_mesh, uniform_refine, mesh_metrics
from stwave.temporal import TimePartition, TemporalMatrices, assemble_temporal
from stwave.spatial import MaterialModel, EdgeDofMap, SpatialMatrices, assemble_spatial
from stwave.system import ProblemData, SolutionCoefficients, solve

__all__ = [
    "TriMesh",
    "MeshMetrics",
    "build_structured_mesh",
    "uniform_refine",
    "mesh_metrics",
    "TimePartition",
    "TemporalMatrices",
    "assemble_temporal",
    "MaterialModel",
    "EdgeDofMap",
    "SpatialMatrices",
    "assemble_spatial",
    "ProblemData",
    "SolutionCoefficients",
    "solve",
]

__version__ = "0.1.0"
