"""Soft Impute: iterated singular value shrinkage for nuclear-norm completion.

Each step forms ``Y = P_omega(X) + P_omega_perp(Z)`` as the implicit sum of
a sparse residual and the current low-rank iterate, takes a rank-k SVD of
``Y`` with the configured backend and soft-thresholds the singular values.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse.linalg

from .errors import DimensionError
from .metrics import gamma, sigma_drift, subspace_drift
from .rsvd import RsvdParams, exact_svd, randomized_svd, seeded_svd_update
from .sparse import PartialSVD, SparseMatrix, SparsePlusLowRank, residual_on_omega

__all__ = [
    "Backend",
    "SolverConfig",
    "CompletionSolution",
    "shrink",
    "build_y",
    "impute_step",
    "gamma",
    "objective",
    "solve",
    "solve_path",
    "top_singular_value",
    "lambda_from_rho",
]

log = logging.getLogger(__name__)


class Backend(str, enum.Enum):
    EXACT = "exact_dense"
    RANDOMIZED = "randomized"
    SEEDED = "randomized_seeded"


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    ``rsvd_params.k`` is the rank budget for every backend, and its seed is
    the base seed from which per-iteration sketch seeds are derived.
    """

    rsvd_params: RsvdParams = field(default_factory=lambda: RsvdParams(k=50))
    backend: Backend = Backend.EXACT
    epsilon: float = 1e-3
    max_iterations: int = 100
    lambdas: tuple[float, ...] = ()
    threads: int = 1
    trace: bool = False

    def __post_init__(self):
        object.__setattr__(self, "backend", Backend(self.backend))
        object.__setattr__(self, "lambdas", tuple(float(l) for l in self.lambdas))
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.lambdas:
            _check_lambdas(self.lambdas)


def _check_lambdas(lambdas: Sequence[float]) -> None:
    lam = np.asarray(lambdas, dtype=float)
    if lam.size == 0:
        raise ValueError("need at least one lambda")
    if np.any(lam < 0):
        raise ValueError("lambdas must be nonnegative")
    if np.any(np.diff(lam) >= 0):
        raise ValueError("lambdas must be strictly decreasing")


@dataclass(frozen=True, eq=False)
class CompletionSolution:
    z: PartialSVD
    lam: float
    iterations: int
    gamma_trace: list[float]
    objective_trace: list[float]
    converged: bool
    # (theta_P, theta_Q, phi_sigma) per inner iteration when tracing
    drift_trace: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def rank(self) -> int:
        return self.z.rank


def shrink(svd: PartialSVD, lam: float) -> PartialSVD:
    """Soft-threshold singular values by ``lam``, dropping those that hit zero."""
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    s = svd.sigma - lam
    keep = s > 0
    if lam == 0 or keep.all():
        return PartialSVD(svd.P, np.maximum(s, 0.0), svd.Q, svd.meta)
    return PartialSVD(svd.P[:, keep], s[keep], svd.Q[:, keep], svd.meta)


def build_y(x: SparseMatrix, z: PartialSVD) -> SparsePlusLowRank:
    """``P_omega(X) - P_omega(Z) + Z`` as an implicit matrix."""
    return SparsePlusLowRank(residual_on_omega(x, z), z)


def objective(x: SparseMatrix, z: PartialSVD, lam: float) -> float:
    """``0.5 * ||P_omega(X - Z)||_F^2 + lam * ||Z||_*``."""
    r = residual_on_omega(x, z).values
    return 0.5 * float(r @ r) + lam * z.nuclear_norm()


def _svd_of(y, z, backend, params, threads):
    if backend is Backend.EXACT:
        return exact_svd(y, params.k)
    if backend is Backend.RANDOMIZED:
        return randomized_svd(y, params, threads).truncate(params.k)
    return seeded_svd_update(z, y, params, threads).truncate(params.k)


def impute_step(
    x: SparseMatrix,
    z: PartialSVD,
    lam: float,
    backend: Backend | str = Backend.EXACT,
    params: RsvdParams | None = None,
    threads: int = 1,
) -> PartialSVD:
    """One Soft Impute update ``Z <- S_lam(P_omega(X) + P_omega_perp(Z))``.

    The SVD is truncated to ``params.k`` before shrinking (exact backend:
    full rank when ``params`` is None).  For the seeded backend ``z`` also
    supplies the seed block.
    """
    if x.shape != z.shape:
        raise DimensionError(f"data {x.shape} vs iterate {z.shape}")
    backend = Backend(backend)
    if params is None:
        if backend is not Backend.EXACT:
            raise ValueError("randomized backends need RsvdParams")
        params = RsvdParams(k=min(x.shape))
    y = build_y(x, z)
    return shrink(_svd_of(y, z, backend, params, threads), lam)


def _iteration_seed(base, stream: int, j: int):
    if isinstance(base, (int, np.integer)):
        return (int(base), stream, j)
    return (*base, stream, j)


def solve(
    x: SparseMatrix,
    lam: float,
    z_init: PartialSVD | None = None,
    config: SolverConfig | None = None,
    stream: int = 0,
) -> CompletionSolution:
    """Iterate :func:`impute_step` until ``gamma <= epsilon``.

    Hitting ``max_iterations`` returns with ``converged=False``.  ``stream``
    separates the sketch seeds of different solves sharing a base seed.
    """
    config = config or SolverConfig()
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    z = PartialSVD.zeros(x.shape) if z_init is None else z_init
    if z.shape != x.shape:
        raise DimensionError(f"initial iterate {z.shape} vs data {x.shape}")
    params = config.rsvd_params
    gammas: list[float] = []
    objectives: list[float] = []
    drift: list[tuple[float, float, float]] = []
    converged = False
    j = 0
    for j in range(1, config.max_iterations + 1):
        step_params = params.with_seed(_iteration_seed(params.seed, stream, j))
        z_new = impute_step(x, z, lam, config.backend, step_params, config.threads)
        g = gamma(z_new, z)
        gammas.append(g)
        objectives.append(objective(x, z_new, lam))
        if config.trace:
            drift.append(
                (
                    subspace_drift(z_new.P, z.P, check=False),
                    subspace_drift(z_new.Q, z.Q, check=False),
                    sigma_drift(z_new.sigma, z.sigma),
                )
            )
        z = z_new
        if g <= config.epsilon:
            converged = True
            break
    if not converged:
        log.info("soft impute hit max_iterations=%d at lambda=%g", config.max_iterations, lam)
    return CompletionSolution(z, float(lam), j, gammas, objectives, converged, drift)


def solve_path(
    x: SparseMatrix,
    lambdas: Sequence[float] | None = None,
    config: SolverConfig | None = None,
    z_init: PartialSVD | None = None,
) -> list[CompletionSolution]:
    """Solutions along a decreasing lambda path, each warm-started from the last."""
    config = config or SolverConfig()
    lambdas = config.lambdas if lambdas is None else tuple(lambdas)
    _check_lambdas(lambdas)
    z = z_init
    out = []
    for i, lam in enumerate(lambdas):
        sol = solve(x, lam, z, config, stream=i)
        out.append(sol)
        z = sol.z
    return out


def top_singular_value(x: SparseMatrix) -> float:
    """Largest singular value of the zero-filled observed matrix."""
    if x.nnz == 0:
        return 0.0
    if min(x.shape) < 3:
        return float(np.linalg.norm(x.to_dense(), 2))
    # fixed start vector keeps ARPACK deterministic
    s = scipy.sparse.linalg.svds(
        x.csr, k=1, v0=np.ones(min(x.shape)), return_singular_vectors=False, tol=1e-10
    )
    return float(s[0])


def lambda_from_rho(x: SparseMatrix, rho: float) -> float:
    """Convert the scale-free ``rho = lambda / sigma_1(X)`` into ``lambda``."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    return rho * top_singular_value(x)
