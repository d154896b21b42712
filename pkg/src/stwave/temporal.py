"""Petrov-Galerkin matrices for continuous piecewise quadratic functions in time.

Global quadratic nodes are numbered ``0 .. 2N`` for ``N`` time elements
(element ``e`` owns nodes ``2e, 2e+1, 2e+2``).  Trial functions vanish at
t = 0 (nodes ``1 .. 2N``), test functions vanish at t = T (nodes
``0 .. 2N-1``).  Matrices are stored with rows = test, columns = trial.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class TimePartition:
    """Strictly increasing time nodes ``0 = t_0 < ... < t_N = T``."""

    t_nodes: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t_nodes, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise ValueError("a time partition needs at least two nodes")
        if t[0] != 0.0:
            raise ValueError("time partition must start at t = 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time nodes must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "t_nodes", t)

    @classmethod
    def equidistant(cls, T: float, n_elements: int) -> "TimePartition":
        if T <= 0:
            raise ValueError("final time must be positive")
        if n_elements < 1:
            raise ValueError("need at least one time element")
        return cls(np.linspace(0.0, T, n_elements + 1))

    @property
    def T(self) -> float:
        return float(self.t_nodes[-1])

    @property
    def n_elements(self) -> int:
        return len(self.t_nodes) - 1

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.t_nodes)

    @property
    def h_max(self) -> float:
        return float(self.h.max())

    @property
    def n_dofs(self) -> int:
        """Dimension of the trial (and test) space, ``2 N``."""
        return 2 * self.n_elements

    def quadratic_nodes(self) -> np.ndarray:
        t = self.t_nodes
        mid = 0.5 * (t[:-1] + t[1:])
        out = np.empty(2 * len(t) - 1)
        out[0::2] = t
        out[1::2] = mid
        return out

    def is_equidistant(self, rtol: float = 1e-12) -> bool:
        h = self.h
        return bool(np.all(np.abs(h - h[0]) <= rtol * h[0]))


# Element matrices on [0, h] with nodes (0, h/2, h), exact rationals.
_MASS = [[4, 2, -1], [2, 16, 2], [-1, 2, 4]]  # * h / 30
_STIFF = [[7, -8, 1], [-8, 16, -8], [1, -8, 7]]  # / (3 h)
_ADV = [[-3, 4, -1], [-4, 0, 4], [1, -4, 3]]  # / 6, [test, trial] = int phi_trial' phi_test
_MIXED = [[1, 0], [2, 2], [0, 1]]  # * h / 6, [quadratic test, linear]


def quadratic_element_matrices(h: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(M_t^e, A_tt^e, A_t^e)`` for one element of length ``h``.

    ``A_t^e[i, j] = int phi_j' phi_i`` (row = test, column = trial).
    """
    if not h > 0:
        raise ValueError("element length must be positive")
    M = np.array(_MASS, dtype=float) * (h / 30.0)
    Att = np.array(_STIFF, dtype=float) / (3.0 * h)
    At = np.array(_ADV, dtype=float) / 6.0
    return M, Att, At


def quadratic_element_matrices_exact(h: Fraction) -> tuple[list, list, list]:
    """Rational version of :func:`quadratic_element_matrices`."""
    h = Fraction(h)
    M = [[Fraction(v) * h / 30 for v in row] for row in _MASS]
    Att = [[Fraction(v) / (3 * h) for v in row] for row in _STIFF]
    At = [[Fraction(v, 6) for v in row] for row in _ADV]
    return M, Att, At


@dataclass(frozen=True)
class TemporalMatrices:
    """Restricted temporal matrices, each ``2N x 2N`` (test 0..2N-1, trial 1..2N).

    The ``*_full`` arrays are the unrestricted ``(2N+1) x (2N+1)`` assemblies.
    """

    A_tt: np.ndarray
    A_t: np.ndarray
    M_t: np.ndarray
    A_tt_full: np.ndarray
    A_t_full: np.ndarray
    M_t_full: np.ndarray

    @property
    def n(self) -> int:
        return self.A_tt.shape[0]


def _assemble_full(partition: TimePartition):
    n = 2 * partition.n_elements + 1
    M = np.zeros((n, n))
    Att = np.zeros((n, n))
    At = np.zeros((n, n))
    for e, h in enumerate(partition.h):
        Me, Atte, Ate = quadratic_element_matrices(h)
        sl = slice(2 * e, 2 * e + 3)
        M[sl, sl] += Me
        Att[sl, sl] += Atte
        At[sl, sl] += Ate
    return Att, At, M


def assemble_temporal(partition: TimePartition) -> TemporalMatrices:
    Att, At, M = _assemble_full(partition)
    return TemporalMatrices(
        A_tt=Att[:-1, 1:].copy(),
        A_t=At[:-1, 1:].copy(),
        M_t=M[:-1, 1:].copy(),
        A_tt_full=Att,
        A_t_full=At,
        M_t_full=M,
    )


def initial_row_columns(partition: TimePartition) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Columns of ``A_tt``, ``A_t``, ``M_t`` belonging to the trial node t = 0.

    Rows are the test indices ``0 .. 2N-1``.
    """
    Att, At, M = _assemble_full(partition)
    return Att[:-1, 0].copy(), At[:-1, 0].copy(), M[:-1, 0].copy()


def linear_mass(partition: TimePartition) -> np.ndarray:
    """Mass matrix of the continuous piecewise linear hat functions, ``(N+1) x (N+1)``."""
    n = partition.n_elements + 1
    M = np.zeros((n, n))
    for e, h in enumerate(partition.h):
        M[e : e + 2, e : e + 2] += (h / 6.0) * np.array([[2.0, 1.0], [1.0, 2.0]])
    return M


def quadratic_linear_mass(partition: TimePartition) -> np.ndarray:
    """``int phi2_l phi1_m`` for test index ``l = 0 .. 2N-1`` and all hats ``m``."""
    N = partition.n_elements
    M = np.zeros((2 * N + 1, N + 1))
    for e, h in enumerate(partition.h):
        M[2 * e : 2 * e + 3, e : e + 2] += np.array(_MIXED, dtype=float) * (h / 6.0)
    return M[:-1]


def quadratic_basis(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Local shape functions and their s-derivatives at reference points ``s`` in [0, 1].

    Returns arrays of shape ``(len(s), 3)``.
    """
    s = np.asarray(s, dtype=float)
    val = np.stack([(1 - s) * (1 - 2 * s), 4 * s * (1 - s), s * (2 * s - 1)], axis=-1)
    der = np.stack([4 * s - 3, 4 - 8 * s, 4 * s - 1], axis=-1)
    return val, der


def find_element(partition: TimePartition, t: float) -> tuple[int, float]:
    """Time element containing ``t`` and the local coordinate in [0, 1]."""
    tn = partition.t_nodes
    if t < tn[0] - 1e-14 or t > tn[-1] + 1e-14:
        raise ValueError(f"t = {t} outside [0, {tn[-1]}]")
    e = int(np.clip(np.searchsorted(tn, t, side="right") - 1, 0, len(tn) - 2))
    return e, (t - tn[e]) / (tn[e + 1] - tn[e])
