"""Refit singular values by nonnegative least squares on the observed entries.

Holding the singular vectors fixed, the weights ``sigma >= 0`` minimizing
``||P_omega(X) - sum_i sigma_i P_omega(p_i q_i^T)||_F^2`` undo some of the
bias introduced by shrinkage.
"""

from __future__ import annotations

import numpy as np

from .rsvd import rng_for
from .sparse import PartialSVD, SparseMatrix

__all__ = ["nnls_projected_gradient", "postprocess_sigma"]


def nnls_projected_gradient(gram, rhs, x0=None, tol=1e-8, max_iter=10_000):
    """Minimize ``0.5 x^T G x - c^T x`` over ``x >= 0``.

    Projected gradient with fixed step ``1 / L``, ``L`` the largest eigenvalue
    of ``gram``.  Stops once the step is below ``tol`` relative to ``||x||``.
    Each step is a descent step, so the objective never increases from ``x0``.
    """
    G = np.asarray(gram, dtype=float)
    c = np.asarray(rhs, dtype=float)
    x = np.zeros(c.size) if x0 is None else np.maximum(np.asarray(x0, dtype=float), 0.0)
    L = float(np.linalg.eigvalsh(G)[-1]) if G.size else 0.0
    if L <= 0:
        return x
    for _ in range(max_iter):
        x_new = np.maximum(x - (G @ x - c) / L, 0.0)
        step = np.linalg.norm(x_new - x)
        x = x_new
        if step <= tol * max(np.linalg.norm(x), np.finfo(float).tiny):
            break
    return x


def postprocess_sigma(
    x: SparseMatrix, z: PartialSVD, cap: int = 1_000_000, seed=0
) -> PartialSVD:
    """Replace ``z.sigma`` with its NNLS refit on (at most ``cap``) observed entries.

    Entries beyond ``cap`` are subsampled uniformly without replacement.
    Triplets whose weight drops to zero are removed and the rest re-sorted.
    """
    if z.rank == 0 or x.nnz == 0:
        return z
    if x.nnz > cap:
        idx = np.sort(rng_for(seed).choice(x.nnz, size=cap, replace=False))
        rows, cols, vals = x.rows[idx], x.cols[idx], x.values[idx]
    else:
        rows, cols, vals = x.rows, x.cols, x.values
    design = z.P[rows] * z.Q[cols]
    gram = design.T @ design
    if not np.any(gram):
        return z
    sigma = nnls_projected_gradient(gram, design.T @ vals, x0=z.sigma)
    order = np.argsort(-sigma, kind="stable")
    order = order[sigma[order] > 0]
    meta = dict(z.meta, postprocessed=True)
    return PartialSVD(z.P[:, order], sigma[order], z.Q[:, order], meta)
