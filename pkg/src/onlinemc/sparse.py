"""Sparse observation storage and the sparse-plus-low-rank implicit matrix.

Soft Impute never forms the dense completed matrix.  Each iteration works
with ``Y = S + P diag(sigma) Q^T`` where ``S`` holds residuals on the observed
set only, and everything the SVD routines need from ``Y`` is a product with
a thin block of vectors.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Mapping

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError

__all__ = [
    "SparseMatrix",
    "PartialSVD",
    "SparsePlusLowRank",
    "matvec",
    "matvec_t",
    "project",
    "residual_on_omega",
    "pad",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Observed entries of an ``m x n`` matrix in coordinate form.

    Entries are stored zero-based in row-major order.  Duplicate coordinates
    are rejected rather than summed since each cell holds a single rating.
    """

    shape: tuple[int, int]
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        m, n = (int(d) for d in self.shape)
        if m < 0 or n < 0:
            raise DimensionError(f"negative shape {self.shape}")
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if not (rows.size == cols.size == values.size):
            raise DimensionError("rows, cols and values must have equal length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n:
                raise DimensionError(f"entry index out of range for shape {(m, n)}")
            order = np.lexsort((cols, rows))
            rows, cols, values = rows[order], cols[order], values[order]
            dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if dup.any():
                i = int(np.flatnonzero(dup)[0])
                raise DimensionError(f"duplicate entry at ({rows[i]}, {cols[i]})")
        object.__setattr__(self, "shape", (m, n))
        object.__setattr__(self, "rows", _frozen(rows))
        object.__setattr__(self, "cols", _frozen(cols))
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def from_entries(cls, shape, entries: Iterable[tuple[int, int, float]]) -> "SparseMatrix":
        entries = list(entries)
        if not entries:
            return cls.empty(shape)
        r, c, v = zip(*entries)
        return cls(tuple(shape), np.array(r), np.array(c), np.array(v, dtype=float))

    @classmethod
    def from_dense(cls, dense: np.ndarray, mask: np.ndarray | None = None) -> "SparseMatrix":
        """Build from a dense array, keeping entries where ``mask`` is true.

        Without a mask every entry is kept, zeros included.
        """
        dense = np.asarray(dense, dtype=float)
        if mask is None:
            mask = np.ones(dense.shape, dtype=bool)
        r, c = np.nonzero(mask)
        return cls(dense.shape, r, c, dense[r, c])

    @classmethod
    def empty(cls, shape) -> "SparseMatrix":
        return cls(tuple(shape), np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    @cached_property
    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, (self.rows, self.cols)), shape=self.shape)

    @cached_property
    def csr_t(self) -> sp.csr_matrix:
        return self.csr.T.tocsr()

    def with_values(self, values: np.ndarray) -> "SparseMatrix":
        """Same support, new values (given in this matrix's canonical order)."""
        values = np.asarray(values, dtype=float)
        if values.shape != self.values.shape:
            raise DimensionError("values must match the number of stored entries")
        return SparseMatrix(self.shape, self.rows, self.cols, values)

    def subset(self, idx: np.ndarray) -> "SparseMatrix":
        """Entries at positions ``idx`` of the canonical order."""
        return SparseMatrix(self.shape, self.rows[idx], self.cols[idx], self.values[idx])

    def resize(self, shape) -> "SparseMatrix":
        return SparseMatrix(tuple(shape), self.rows, self.cols, self.values)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = self.values
        return out

    def mask(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=bool)
        out[self.rows, self.cols] = True
        return out

    def frob_norm_sq(self) -> float:
        return float(self.values @ self.values)

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


@dataclass(frozen=True, eq=False)
class PartialSVD:
    """Rank-k factors ``P diag(sigma) Q^T`` with orthonormal ``P`` and ``Q``.

    A rank-0 instance (``P`` of shape ``(m, 0)``) represents the zero matrix.
    ``meta`` carries non-numerical bookkeeping such as clipping notes and
    scan counts from the SVD routines.
    """

    P: np.ndarray
    sigma: np.ndarray
    Q: np.ndarray
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        Q = np.asarray(self.Q, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float).ravel()
        if P.ndim != 2 or Q.ndim != 2:
            raise DimensionError("P and Q must be 2-d")
        if not (P.shape[1] == Q.shape[1] == sigma.size):
            raise DimensionError(
                f"inconsistent ranks: P {P.shape}, sigma {sigma.shape}, Q {Q.shape}"
            )
        if sigma.size and (sigma.min() < 0 or np.any(np.diff(sigma) > 0)):
            raise ValueError("sigma must be nonnegative and nonincreasing")
        object.__setattr__(self, "P", _frozen(P))
        object.__setattr__(self, "Q", _frozen(Q))
        object.__setattr__(self, "sigma", _frozen(sigma))

    @classmethod
    def zeros(cls, shape) -> "PartialSVD":
        m, n = shape
        return cls(np.zeros((m, 0)), np.zeros(0), np.zeros((n, 0)))

    @classmethod
    def from_dense(cls, a: np.ndarray, rank: int | None = None) -> "PartialSVD":
        """Exact (optionally truncated) SVD of a dense array."""
        from .rsvd import canonical_signs

        U, s, Vt = np.linalg.svd(np.asarray(a, dtype=float), full_matrices=False)
        if rank is not None:
            U, s, Vt = U[:, :rank], s[:rank], Vt[:rank]
        U, V = canonical_signs(U, Vt.T)
        return cls(U, s, V)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.P.shape[0], self.Q.shape[0])

    @property
    def rank(self) -> int:
        return int(self.sigma.size)

    def to_dense(self) -> np.ndarray:
        return (self.P * self.sigma) @ self.Q.T

    def frob_norm_sq(self) -> float:
        return float(self.sigma @ self.sigma)

    def nuclear_norm(self) -> float:
        return float(self.sigma.sum())

    def truncate(self, k: int) -> "PartialSVD":
        if k >= self.rank:
            return self
        return PartialSVD(self.P[:, :k], self.sigma[:k], self.Q[:, :k], self.meta)

    def is_orthonormal(self, tol: float | None = None) -> bool:
        k = self.rank
        if tol is None:
            tol = 1e-10 * max(k, 1)
        eye = np.eye(k)
        return bool(
            np.linalg.norm(self.P.T @ self.P - eye) <= tol
            and np.linalg.norm(self.Q.T @ self.Q - eye) <= tol
        )

    def __repr__(self):
        return f"PartialSVD(shape={self.shape}, rank={self.rank})"


def _split_columns(ncols: int, threads: int) -> list[slice]:
    bounds = np.linspace(0, ncols, min(threads, max(ncols, 1)) + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


@dataclass(frozen=True, eq=False)
class SparsePlusLowRank:
    """Implicit matrix ``S + P diag(sigma) Q^T``.

    Products cost ``O(nnz + (m + n) k)`` per vector.  ``threads > 1`` splits a
    block product by columns across a thread pool; ``threads=1`` is the
    deterministic mode.
    """

    sparse_part: SparseMatrix
    lowrank_part: PartialSVD

    def __post_init__(self):
        if self.sparse_part.shape != self.lowrank_part.shape:
            raise DimensionError(
                f"sparse part {self.sparse_part.shape} vs low-rank part "
                f"{self.lowrank_part.shape}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.sparse_part.shape

    def _mm(self, V: np.ndarray, transpose: bool) -> np.ndarray:
        z = self.lowrank_part
        if transpose:
            S, left, right = self.sparse_part.csr_t, z.Q, z.P
        else:
            S, left, right = self.sparse_part.csr, z.P, z.Q
        out = S @ V
        if z.rank:
            out = out + left @ (z.sigma[:, None] * (right.T @ V))
        return np.asarray(out)

    def matmat(self, V: np.ndarray, threads: int = 1) -> np.ndarray:
        """``Y @ V`` for a block ``V`` of shape ``(n, l)``."""
        return self._block(V, threads, transpose=False)

    def rmatmat(self, U: np.ndarray, threads: int = 1) -> np.ndarray:
        """``Y.T @ U`` for a block ``U`` of shape ``(m, l)``."""
        return self._block(U, threads, transpose=True)

    def _block(self, V, threads, transpose):
        V = np.asarray(V, dtype=float)
        m, n = self.shape
        inner, outer = (m, n) if transpose else (n, m)
        if V.ndim != 2 or V.shape[0] != inner:
            raise DimensionError(f"block of shape {V.shape} does not conform to {self.shape}")
        if threads <= 1 or V.shape[1] < 2:
            return self._mm(V, transpose)
        out = np.empty((outer, V.shape[1]))
        chunks = _split_columns(V.shape[1], threads)

        def work(sl):
            out[:, sl] = self._mm(V[:, sl], transpose)

        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(work, chunks))
        return out

    def to_dense(self) -> np.ndarray:
        return self.sparse_part.to_dense() + self.lowrank_part.to_dense()


def matvec(y: SparsePlusLowRank, v: np.ndarray) -> np.ndarray:
    """Return ``(S + P diag(sigma) Q^T) v``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (y.shape[1],):
        raise DimensionError(f"vector of length {v.shape} for matrix {y.shape}")
    return y.matmat(v[:, None])[:, 0]


def matvec_t(y: SparsePlusLowRank, u: np.ndarray) -> np.ndarray:
    """Return ``(S + P diag(sigma) Q^T)^T u``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (y.shape[0],):
        raise DimensionError(f"vector of length {u.shape} for matrix {y.shape}")
    return y.rmatmat(u[:, None])[:, 0]


def _entries_of(z: PartialSVD, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    if z.rank == 0 or rows.size == 0:
        return np.zeros(rows.size)
    return np.einsum("ij,ij->i", z.P[rows] * z.sigma, z.Q[cols])


def project(z: PartialSVD, omega) -> SparseMatrix:
    """Entries of ``P diag(sigma) Q^T`` on the index set ``omega``.

    ``omega`` is a :class:`SparseMatrix` (its support is used) or a pair of
    index arrays ``(rows, cols)``.  Costs ``O(|omega| k)``.
    """
    if isinstance(omega, SparseMatrix):
        if omega.shape != z.shape:
            raise DimensionError(f"index set for {omega.shape} vs factors {z.shape}")
        return omega.with_values(_entries_of(z, omega.rows, omega.cols))
    rows, cols = (np.asarray(a, dtype=np.int64).ravel() for a in omega)
    out = SparseMatrix(z.shape, rows, cols, np.zeros(rows.size))
    return out.with_values(_entries_of(z, out.rows, out.cols))


def residual_on_omega(x: SparseMatrix, z: PartialSVD) -> SparseMatrix:
    """``P_omega(X) - P_omega(Z)`` on the support of ``x``."""
    if x.shape != z.shape:
        raise DimensionError(f"data {x.shape} vs factors {z.shape}")
    return x.with_values(x.values - _entries_of(z, x.rows, x.cols))


def pad(z: PartialSVD, new_rows: int, new_cols: int) -> PartialSVD:
    """Embed ``z`` in a larger ``new_rows x new_cols`` matrix, zeros elsewhere."""
    m, n = z.shape
    if new_rows < m or new_cols < n:
        raise DimensionError(f"cannot shrink {z.shape} to {(new_rows, new_cols)}")
    if (new_rows, new_cols) == (m, n):
        return z
    P = np.zeros((new_rows, z.rank))
    P[:m] = z.P
    Q = np.zeros((new_cols, z.rank))
    Q[:n] = z.Q
    return PartialSVD(P, z.sigma, Q, z.meta)
