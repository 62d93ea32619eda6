"""Randomized SVD with power iteration, and the warm-seeded update.

The update reuses the right singular vectors of a previous factorization as
the leading columns of the projection block.  When the target is that
factorization plus a sparse perturbation ``U``, the product with the seed
columns is ``P diag(sigma) + U Q`` and only the sparse part is multiplied.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import scipy.linalg

from .errors import DimensionError, NumericalError
from .sparse import PartialSVD, SparseMatrix, SparsePlusLowRank

__all__ = [
    "RsvdParams",
    "gaussian_block",
    "orthonormalize",
    "canonical_signs",
    "randomized_svd",
    "seeded_svd_update",
    "exact_svd",
    "as_operator",
]

log = logging.getLogger(__name__)

Seed = Union[int, Sequence[int]]


@dataclass(frozen=True)
class RsvdParams:
    """Target rank ``k``, oversampling ``p``, power exponent ``q`` and seed."""

    k: int
    p: int = 10
    q: int = 2
    seed: Seed = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.p < 0:
            raise ValueError(f"p must be >= 0, got {self.p}")
        if self.q < 0:
            raise ValueError(f"q must be >= 0, got {self.q}")

    def with_seed(self, seed: Seed) -> "RsvdParams":
        return RsvdParams(self.k, self.p, self.q, seed)


def rng_for(seed: Seed) -> np.random.Generator:
    """Counter-based generator keyed by an int or a tuple of ints."""
    if isinstance(seed, (int, np.integer)):
        entropy = int(seed)
    else:
        entropy = [int(s) for s in seed]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def gaussian_block(rows: int, cols: int, seed: Seed) -> np.ndarray:
    """``rows x cols`` block of i.i.d. standard normals, reproducible per seed."""
    return rng_for(seed).standard_normal((rows, cols))


def orthonormalize(block: np.ndarray) -> np.ndarray:
    """Orthonormal basis for the column span of ``block``.

    Uses QR with column pivoting and drops directions whose pivot falls below
    ``max(shape) * eps * |R[0, 0]|``, so rank-deficient input returns fewer
    columns.  An all-zero block yields an empty basis.
    """
    block = np.asarray(block, dtype=float)
    m, l = block.shape
    if l == 0 or m == 0:
        return np.zeros((m, 0))
    if not np.all(np.isfinite(block)):
        raise NumericalError("non-finite values in block to orthonormalize")
    Qf, R, _ = scipy.linalg.qr(block, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros((m, 0))
    tol = max(m, l) * np.finfo(float).eps * diag[0]
    r = int(np.count_nonzero(diag > tol))
    return Qf[:, :r]


def canonical_signs(P: np.ndarray, Q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flip singular pairs so the first non-negligible entry of each ``P`` column is positive."""
    P = np.array(P, dtype=float)
    Q = np.array(Q, dtype=float)
    if P.shape[1] == 0:
        return P, Q
    absP = np.abs(P)
    thresh = 1e-10 * absP.max(axis=0, initial=0.0)
    first = np.argmax(absP > thresh, axis=0)
    signs = np.sign(P[first, np.arange(P.shape[1])])
    signs[signs == 0] = 1.0
    return P * signs, Q * signs


class _DenseOperator:
    def __init__(self, a):
        self.a = np.asarray(a, dtype=float)
        self.shape = self.a.shape

    def matmat(self, V, threads=1):
        return self.a @ V

    def rmatmat(self, U, threads=1):
        return self.a.T @ U


def as_operator(a):
    """Wrap a dense array or :class:`SparseMatrix` so it exposes ``matmat``/``rmatmat``."""
    if isinstance(a, SparsePlusLowRank):
        return a
    if isinstance(a, SparseMatrix):
        return SparsePlusLowRank(a, PartialSVD.zeros(a.shape))
    return _DenseOperator(a)


def _factor_from_range(op, V: np.ndarray, threads: int, meta: dict) -> PartialSVD:
    m, n = op.shape
    if V.shape[1] == 0:
        meta["rank"] = 0
        return PartialSVD(np.zeros((m, 0)), np.zeros(0), np.zeros((n, 0)), meta)
    # B^T = A^T V, so B = V^T A never needs a row-oriented product
    Bt = op.rmatmat(V, threads)
    if not np.all(np.isfinite(Bt)):
        raise NumericalError("non-finite values in projected matrix")
    try:
        Qb, s, Pbt = np.linalg.svd(Bt, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD of projected matrix failed: {exc}") from exc
    P, Q = canonical_signs(V @ Pbt.T, Qb)
    meta["rank"] = int(s.size)
    return PartialSVD(P, s, Q, meta)


def randomized_svd(a, params: RsvdParams, threads: int = 1) -> PartialSVD:
    """Approximate SVD of ``a`` from a Gaussian sketch of width ``k + p``.

    The sketch is refined by ``q`` rounds of multiplication with ``A A^T``,
    re-orthonormalizing before each product.  Returns all ``min(k + p, m, n)``
    computed triplets; callers truncate.

    Parameters
    ----------
    a : SparsePlusLowRank, SparseMatrix or ndarray
        Matrix to factor.
    params : RsvdParams
    threads : int
        Column-parallel workers for the block products.
    """
    op = as_operator(a)
    m, n = op.shape
    if m == 0 or n == 0:
        raise DimensionError(f"degenerate matrix shape {op.shape}")
    width = min(params.k + params.p, m, n)
    meta = {"width": width, "clipped": width < params.k + params.p, "q": params.q}
    if meta["clipped"]:
        log.debug("sketch width clipped from %d to %d", params.k + params.p, width)
    omega = gaussian_block(n, width, params.seed)
    Y = op.matmat(omega, threads)
    for _ in range(params.q):
        V = orthonormalize(Y)
        W = orthonormalize(op.rmatmat(V, threads))
        Y = op.matmat(W, threads)
    V = orthonormalize(Y)
    meta["scans"] = 2 * params.q + 2
    return _factor_from_range(op, V, threads, meta)


def _is_own_lowrank(target, prior: PartialSVD) -> bool:
    if not isinstance(target, SparsePlusLowRank):
        return False
    z = target.lowrank_part
    if z is prior:
        return True
    return (
        z.rank == prior.rank
        and z.shape == prior.shape
        and np.array_equal(z.sigma, prior.sigma)
        and np.array_equal(z.P, prior.P)
        and np.array_equal(z.Q, prior.Q)
    )


def seeded_svd_update(
    prior: PartialSVD, target, params: RsvdParams, threads: int = 1
) -> PartialSVD:
    """Randomized SVD of ``target`` with projection block ``[prior.Q, G]``.

    ``G`` is Gaussian with ``max(p, k + p - prior.rank)`` columns so the
    sketch keeps width ``k + p`` even when the prior has shrunk below ``k``.
    No power iteration is applied.  A rank-0 prior falls back to
    :func:`randomized_svd` with the same parameters.
    """
    if prior.rank == 0:
        return randomized_svd(target, params, threads)
    op = as_operator(target)
    m, n = op.shape
    if prior.shape != (m, n):
        raise DimensionError(f"prior {prior.shape} vs target {(m, n)}")
    kp = prior.rank
    total = min(max(kp + params.p, params.k + params.p), m, n)
    extra = max(total - kp, 0)
    meta = {
        "width": kp + extra,
        "clipped": kp + extra < max(kp + params.p, params.k + params.p),
        "q": 0,
        "seeded": True,
    }
    omega_hat = gaussian_block(n, extra, params.seed)
    if _is_own_lowrank(target, prior):
        # A_hat Q_k = P_k Sigma_k + U Q_k: only the sparse part touches Q_k
        S = target.sparse_part.csr
        SY = np.asarray(S @ np.hstack([prior.Q, omega_hat]))
        Y = SY
        Y[:, :kp] += prior.P * prior.sigma
        if extra:
            Y[:, kp:] += prior.P @ (prior.sigma[:, None] * (prior.Q.T @ omega_hat))
        meta["shortcut"] = True
    else:
        Y = op.matmat(np.hstack([prior.Q, omega_hat]), threads)
        meta["shortcut"] = False
    V = orthonormalize(Y)
    meta["scans"] = 2
    return _factor_from_range(op, V, threads, meta)


def exact_svd(a, k: int | None = None) -> PartialSVD:
    """Dense SVD of ``a`` truncated to rank ``k``; the reference backend."""
    if isinstance(a, (SparsePlusLowRank, SparseMatrix)):
        dense = a.to_dense()
    else:
        dense = np.asarray(a, dtype=float)
    if 0 in dense.shape:
        raise DimensionError(f"degenerate matrix shape {dense.shape}")
    if not np.all(np.isfinite(dense)):
        raise NumericalError("non-finite values in matrix")
    try:
        out = PartialSVD.from_dense(dense, rank=k)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"dense SVD failed: {exc}") from exc
    return PartialSVD(out.P, out.sigma, out.Q, {"scans": 1, "exact": True})
