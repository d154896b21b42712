"""Sparse matrices, Kronecker products and the direct solver for the space-time system.

Sparse storage is ``scipy.sparse.csr_matrix`` with sorted, duplicate-free
column indices and no stored zeros.  Small systems are solved with a dense
LU factorization with partial pivoting implemented here; larger ones go to
SuperLU.  Both handle nonsymmetric, indefinite matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_LIMIT = 400
MAX_ENTRIES = 2**62


class LinalgError(RuntimeError):
    pass


class DimensionError(LinalgError, ValueError):
    """Operand shapes do not match."""


class SingularMatrixError(LinalgError):
    """The matrix is singular or numerically singular."""


def as_sparse(A) -> sp.csr_matrix:
    """Finalized CSR copy: canonical index order, explicit zeros removed."""
    M = sp.csr_matrix(A, dtype=float, copy=True)
    M.sum_duplicates()
    M.eliminate_zeros()
    M.sort_indices()
    return M


def kron(A, B) -> sp.csr_matrix:
    """Kronecker product with ``A`` as the outer (slow) block index."""
    ra, ca = A.shape
    rb, cb = B.shape
    if ra * rb > MAX_ENTRIES or ca * cb > MAX_ENTRIES:
        raise DimensionError("Kronecker product too large")
    return as_sparse(sp.kron(sp.csr_matrix(A), sp.csr_matrix(B), format="csr"))


@dataclass(frozen=True)
class KroneckerTerm:
    temporal: np.ndarray
    spatial: sp.spmatrix
    sign: float = 1.0

    @property
    def shape(self) -> tuple[int, int]:
        rt, ct = self.temporal.shape
        rx, cx = self.spatial.shape
        return rt * rx, ct * cx

    def to_sparse(self) -> sp.csr_matrix:
        return kron(self.sign * np.asarray(self.temporal), self.spatial)


def kron_sum(terms: list[KroneckerTerm]) -> sp.csr_matrix:
    """Sum of Kronecker terms; terms with an all-zero factor are dropped, not multiplied."""
    shape = None
    out = None
    for term in terms:
        if shape is None:
            shape = term.shape
        elif term.shape != shape:
            raise DimensionError(f"Kronecker term shape {term.shape} != {shape}")
        if sp.csr_matrix(term.spatial).count_nonzero() == 0 or not np.any(term.temporal):
            continue
        K = term.to_sparse()
        out = K if out is None else out + K
    if out is None:
        out = sp.csr_matrix(shape)
    return as_sparse(out)


def matvec(K, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] != K.shape[1]:
        raise DimensionError(f"matrix has {K.shape[1]} columns, vector has {x.shape[0]} entries")
    return K @ x


def lu_factor_dense(A: np.ndarray, tol: float = 1e-14) -> tuple[np.ndarray, np.ndarray]:
    """LU with partial pivoting in plain numpy; returns ``(LU, perm)`` with ``A[perm] = L U``."""
    LU = np.array(A, dtype=float, copy=True)
    n = LU.shape[0]
    if LU.ndim != 2 or LU.shape != (n, n):
        raise DimensionError("LU needs a square matrix")
    if not np.all(np.isfinite(LU)):
        raise SingularMatrixError("matrix has non-finite entries")
    perm = np.arange(n)
    scale = max(np.abs(LU).max() if n else 0.0, 1.0)
    for k in range(n):
        p = k + int(np.argmax(np.abs(LU[k:, k])))
        if abs(LU[p, k]) <= tol * scale:
            raise SingularMatrixError(f"zero pivot in column {k}")
        if p != k:
            LU[[k, p]] = LU[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        LU[k + 1 :, k] /= LU[k, k]
        LU[k + 1 :, k + 1 :] -= np.outer(LU[k + 1 :, k], LU[k, k + 1 :])
    return LU, perm


def lu_solve_dense(LU: np.ndarray, perm: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Forward and back substitution for factors from :func:`lu_factor_dense`."""
    y = np.asarray(b, dtype=float)[perm].copy()
    n = LU.shape[0]
    for i in range(1, n):
        y[i] -= LU[i, :i] @ y[:i]
    for i in range(n - 1, -1, -1):
        y[i] = (y[i] - LU[i, i + 1 :] @ y[i + 1 :]) / LU[i, i]
    return y


class Factorization:
    """A reusable LU factorization of a square sparse matrix."""

    def __init__(self, K, dense_limit: int = DENSE_LIMIT):
        n, m = K.shape
        if n != m:
            raise DimensionError(f"matrix must be square, got {K.shape}")
        self.shape = K.shape
        self._dense = n <= dense_limit
        if self._dense:
            A = K.toarray() if sp.issparse(K) else np.asarray(K, dtype=float)
            self._lu = lu_factor_dense(A)
        else:
            try:
                self._lu = spla.splu(sp.csc_matrix(K, dtype=float))
            except RuntimeError as exc:
                raise SingularMatrixError(str(exc)) from exc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.shape[0]:
            raise DimensionError(f"rhs has {rhs.shape[0]} entries, matrix has {self.shape[0]} rows")
        if self._dense:
            x = lu_solve_dense(*self._lu, rhs)
        else:
            x = self._lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("solution is not finite")
        return x


def sparse_solve(K, rhs: np.ndarray, dense_limit: int = DENSE_LIMIT) -> np.ndarray:
    """Solve ``K x = rhs`` by direct LU factorization."""
    rhs = np.asarray(rhs, dtype=float)
    if K.shape[0] != K.shape[1]:
        raise DimensionError(f"matrix must be square, got {K.shape}")
    if rhs.shape[0] != K.shape[0]:
        raise DimensionError(f"rhs has {rhs.shape[0]} entries, matrix has {K.shape[0]} rows")
    return Factorization(K, dense_limit=dense_limit).solve(rhs)


def block_lower_solve(K, rhs: np.ndarray, block_size: int) -> np.ndarray:
    """Direct solve of a block lower triangular system by forward substitution.

    Diagonal blocks are factored with SuperLU; a factorization is reused
    while consecutive diagonal blocks are identical (equidistant time steps).
    Raises :class:`DimensionError` if ``K`` has entries above the block diagonal.
    """
    K = sp.csr_matrix(K)
    n = K.shape[0]
    rhs = np.asarray(rhs, dtype=float)
    if K.shape[1] != n:
        raise DimensionError(f"matrix must be square, got {K.shape}")
    if rhs.shape[0] != n:
        raise DimensionError(f"rhs has {rhs.shape[0]} entries, matrix has {n} rows")
    if block_size < 1 or n % block_size:
        raise DimensionError(f"size {n} is not a multiple of block size {block_size}")
    x = np.zeros(n)
    lu = None
    prev = None
    for start in range(0, n, block_size):
        stop = start + block_size
        rows = K[start:stop]
        if rows.indices.size and rows.indices.max() >= stop:
            raise DimensionError("matrix is not block lower triangular")
        D = as_sparse(rows[:, start:stop])
        b = rhs[start:stop] - rows[:, :start] @ x[:start]
        same = (
            prev is not None
            and D.nnz == prev.nnz
            and np.array_equal(D.indptr, prev.indptr)
            and np.array_equal(D.indices, prev.indices)
            and np.array_equal(D.data, prev.data)
        )
        if not same:
            lu = Factorization(D, dense_limit=0)
            prev = D
        x[start:stop] = lu.solve(b)
    return x


def relative_residual(K, x: np.ndarray, rhs: np.ndarray) -> float:
    nb = np.linalg.norm(rhs)
    r = np.linalg.norm(K @ x - rhs)
    return float(r / nb) if nb > 0 else float(r)


def write_coo(K, path: str | Path) -> None:
    """Write ``i j value`` lines (0-based), preceded by a ``% rows cols`` header."""
    C = sp.coo_matrix(as_sparse(K))
    with open(path, "w") as fh:
        fh.write(f"% {C.shape[0]} {C.shape[1]}\n")
        for i, j, v in zip(C.row, C.col, C.data):
            fh.write(f"{i} {j} {v:.17g}\n")


def read_coo(path: str | Path, shape: tuple[int, int] | None = None) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("%"):
                if shape is None:
                    parts = line[1:].split()
                    if len(parts) == 2:
                        shape = (int(parts[0]), int(parts[1]))
                continue
            i, j, v = line.split()
            rows.append(int(i))
            cols.append(int(j))
            vals.append(float(v))
    if shape is None:
        shape = (max(rows, default=-1) + 1, max(cols, default=-1) + 1)
    return as_sparse(sp.coo_matrix((vals, (rows, cols)), shape=shape))
