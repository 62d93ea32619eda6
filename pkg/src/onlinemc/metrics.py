"""Error and drift measures between successive factorizations."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError
from .sparse import PartialSVD, SparseMatrix, project

__all__ = ["rmse", "subspace_drift", "sigma_drift", "frobenius_inner", "gamma"]


def rmse(truth: SparseMatrix, predicted: PartialSVD) -> float:
    """Root mean squared error of ``predicted`` on the entries of ``truth``."""
    if truth.nnz == 0:
        raise ValueError("rmse needs at least one observed entry")
    if truth.shape != predicted.shape:
        raise DimensionError(f"truth {truth.shape} vs prediction {predicted.shape}")
    err = truth.values - project(predicted, truth).values
    return float(np.sqrt(err @ err / truth.nnz))


def subspace_drift(current: np.ndarray, previous: np.ndarray, check: bool = True) -> float:
    """Fraction of the span of ``current`` lying outside the span of ``previous``.

    Both blocks have orthonormal columns.  Computed as
    ``(k - ||current^T previous||_F^2) / k`` with ``k`` the column count of
    ``current``; this equals ``||(I - previous previous^T) current||_F^2 / k``
    without forming the ``m x m`` projector.  ``previous`` may have a
    different column count (including zero, which gives 1).
    """
    current = np.asarray(current, dtype=float)
    previous = np.asarray(previous, dtype=float)
    if current.shape[0] != previous.shape[0]:
        raise DimensionError(f"row counts differ: {current.shape} vs {previous.shape}")
    k = current.shape[1]
    if k == 0:
        return float("nan")
    if check:
        for name, b in (("current", current), ("previous", previous)):
            tol = 1e-8 * max(b.shape[1], 1)
            if np.linalg.norm(b.T @ b - np.eye(b.shape[1])) > tol:
                raise ValueError(f"{name} block is not orthonormal")
    overlap = np.linalg.norm(current.T @ previous) ** 2
    return float(min(max((k - overlap) / k, 0.0), 1.0))


def sigma_drift(current: np.ndarray, previous: np.ndarray) -> float:
    """``||current - previous||^2 / ||current||^2``, shorter vector zero-padded."""
    current = np.asarray(current, dtype=float).ravel()
    previous = np.asarray(previous, dtype=float).ravel()
    size = max(current.size, previous.size)
    a = np.zeros(size)
    a[: current.size] = current
    b = np.zeros(size)
    b[: previous.size] = previous
    denom = a @ a
    if denom == 0:
        return float("inf")
    d = a - b
    return float(d @ d / denom)


def frobenius_inner(a: PartialSVD, b: PartialSVD) -> float:
    """``trace(A^T B)`` from the factors, via ``k x k`` Gram blocks."""
    if a.shape != b.shape:
        raise DimensionError(f"{a.shape} vs {b.shape}")
    if a.rank == 0 or b.rank == 0:
        return 0.0
    left = a.P.T @ b.P
    right = a.Q.T @ b.Q
    return float(np.sum(a.sigma[:, None] * left * right * b.sigma[None, :]))


def gamma(z_new: PartialSVD, z_old: PartialSVD) -> float:
    """Relative squared change ``||Z_new - Z_old||_F^2 / ||Z_old||_F^2``.

    Infinite when ``z_old`` is zero and ``z_new`` is not, so a cold start
    takes a second step; zero when both are zero (nothing changed).
    """
    old = z_old.frob_norm_sq()
    if old == 0.0:
        return 0.0 if z_new.frob_norm_sq() == 0.0 else float("inf")
    diff = z_new.frob_norm_sq() + old - 2.0 * frobenius_inner(z_new, z_old)
    return max(diff, 0.0) / old
