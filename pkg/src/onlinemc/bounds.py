"""Closed-form error bounds for the randomized SVD and their empirical checks.

The evaluators are pure functions of :class:`BoundInputs`.  The Monte Carlo
helpers draw many independent sketches of a fixed matrix so the sample
means can be compared with the expected-error bounds.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .rsvd import RsvdParams, exact_svd, gaussian_block, orthonormalize, randomized_svd
from .softimpute import build_y, objective, shrink
from .sparse import PartialSVD, SparseMatrix

__all__ = [
    "BoundInputs",
    "HypothesisWarning",
    "power_norm",
    "theta",
    "spectral_bound",
    "frobenius_power_bound",
    "objective_gap_bound",
    "PowerSchemeCheck",
    "power_scheme_check",
    "standard_test_matrix",
    "spectral_errors",
    "frobenius_residuals",
    "objective_gaps",
]


class HypothesisWarning(UserWarning):
    """A bound was evaluated outside the hypotheses it was proved under."""


@dataclass(frozen=True)
class BoundInputs:
    m: int
    n: int
    k: int
    p: int
    q: int = 0
    lam: float = 0.0
    sigma_tail: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "sigma_tail", tuple(float(s) for s in self.sigma_tail))
        if self.q < 0:
            raise ValueError("q must be nonnegative")

    @property
    def p_equals_k(self) -> bool:
        return self.p == self.k

    @property
    def sigma_next(self) -> float:
        """``sigma_{k+1}``, zero when the tail is empty."""
        return self.sigma_tail[0] if self.sigma_tail else 0.0


def power_norm(v: Sequence[float], s: float) -> float:
    """``(sum |v_i|^s)^(1/s)``; scaled by the max entry to avoid overflow."""
    v = np.abs(np.asarray(v, dtype=float))
    if v.size == 0:
        return 0.0
    top = v.max()
    if top == 0:
        return 0.0
    return float(top * np.sum((v / top) ** s) ** (1.0 / s))


def _require_k(inp: BoundInputs):
    if inp.k < 2:
        raise ValueError(f"bound requires k >= 2, got k={inp.k}")
    if not inp.p_equals_k:
        warnings.warn(
            f"bound assumes p = k; evaluated with p={inp.p}, k={inp.k}",
            HypothesisWarning,
            stacklevel=3,
        )


def theta(inp: BoundInputs) -> float:
    """``[1 + 4 sqrt(2 min(m, n) / (k - 1))]^(1 / (2q + 1))``."""
    if inp.k < 2:
        raise ValueError(f"theta requires k >= 2, got k={inp.k}")
    base = 1.0 + 4.0 * math.sqrt(2.0 * min(inp.m, inp.n) / (inp.k - 1))
    return base ** (1.0 / (2 * inp.q + 1))


def spectral_bound(inp: BoundInputs) -> float:
    """Expected spectral error of the rank ``k + p`` randomized SVD."""
    _require_k(inp)
    return theta(inp) * inp.sigma_next


def frobenius_power_bound(inp: BoundInputs) -> float:
    """Expected squared Frobenius residual of the range found with power exponent ``q``."""
    if inp.p < 2:
        raise ValueError(f"bound requires p >= 2, got p={inp.p}")
    s = 2 * inp.q + 1
    factor = (1.0 + inp.k / (inp.p - 1)) ** (1.0 / s)
    return (inp.k + inp.p) * factor * power_norm(inp.sigma_tail, s)


def objective_gap_bound(inp: BoundInputs) -> float:
    """Expected objective error from thresholding a randomized instead of exact SVD."""
    _require_k(inp)
    s = 2 * inp.q + 1
    tail = np.asarray(inp.sigma_tail, dtype=float)
    first = inp.lam * inp.k * (1.0 + theta(inp)) * inp.sigma_next
    second = 0.5 * float(tail @ tail)
    third = inp.k * (1.0 + inp.k / (inp.k - 1)) ** (1.0 / s) * power_norm(tail, s)
    return first + second + third


_SLACK = 1e-12


@dataclass(frozen=True)
class PowerSchemeCheck:
    """Both sides of the spectral and Frobenius power-scheme inequalities.

    ``frobenius_rhs`` uses the ``sqrt(l)`` factor; ``frobenius_rank_rhs``
    uses ``sqrt(rank((I - P_Y) A))`` instead, which is what
    ``||M||_F <= sqrt(rank M) ||M||_2`` actually guarantees.  The ``sqrt(l)``
    form can fail when the residual has rank above ``l``.
    """

    spectral_lhs: float
    spectral_rhs: float
    frobenius_lhs: float
    frobenius_rhs: float
    frobenius_rank_rhs: float = math.inf

    @property
    def spectral_holds(self) -> bool:
        return self.spectral_lhs <= self.spectral_rhs + _SLACK

    @property
    def frobenius_holds(self) -> bool:
        return self.frobenius_lhs <= self.frobenius_rhs + _SLACK

    @property
    def frobenius_rank_holds(self) -> bool:
        return self.frobenius_lhs <= self.frobenius_rank_rhs + _SLACK


def power_scheme_check(a: np.ndarray, omega_block: np.ndarray, q: int) -> PowerSchemeCheck:
    """Both sides of the power-scheme residual inequalities for one sketch.

    With ``B = (A A^T)^q A`` and ``P_Y`` the projector onto ``range(B Omega)``:
    ``||(I - P_Y) A||_2 <= ||(I - P_Y) B||_2^(1/(2q+1))`` and the Frobenius
    version with an extra ``sqrt(l)`` factor (see :class:`PowerSchemeCheck`
    for its rank-based counterpart).  Dense; meant for small inputs.
    """
    a = np.asarray(a, dtype=float)
    B = a
    for _ in range(q):
        B = a @ (a.T @ B)
    V = orthonormalize(B @ omega_block)
    ra = a - V @ (V.T @ a)
    rb = B - V @ (V.T @ B)
    ell = omega_block.shape[1]
    rhs = np.linalg.norm(rb, 2) ** (1.0 / (2 * q + 1))
    rank = np.linalg.matrix_rank(ra) if ra.size else 0
    return PowerSchemeCheck(
        spectral_lhs=float(np.linalg.norm(ra, 2)),
        spectral_rhs=float(rhs),
        frobenius_lhs=float(np.linalg.norm(ra)),
        frobenius_rhs=float(math.sqrt(ell) * rhs),
        frobenius_rank_rhs=float(math.sqrt(rank) * rhs),
    )


def standard_test_matrix(
    m: int = 200, n: int = 100, decay: float = 0.8, rank: int | None = None, seed=0
) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``m x n`` matrix with singular values ``decay ** j``, ``j = 0, 1, ...``.

    Singular values past ``rank`` are set to zero.  Returns the matrix and
    its singular values.
    """
    r = min(m, n)
    U = orthonormalize(gaussian_block(m, r, (seed, 11)))
    V = orthonormalize(gaussian_block(n, r, (seed, 12)))
    s = decay ** np.arange(r, dtype=float)
    if rank is not None:
        s[rank:] = 0.0
    return (U * s) @ V.T, s


def _trials(fn: Callable[[int], float], trials: int, threads: int) -> np.ndarray:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return np.array(list(pool.map(fn, range(trials))))
    return np.array([fn(t) for t in range(trials)])


def spectral_errors(
    a: np.ndarray, k: int, p: int, q: int, trials: int, seed=0, threads: int = 1
) -> np.ndarray:
    """``||A - P S Q^T||_2`` of the rank ``k + p`` randomized SVD, one per seed."""
    a = np.asarray(a, dtype=float)

    def one(t):
        z = randomized_svd(a, RsvdParams(k, p, q, seed=(seed, t)))
        return float(np.linalg.norm(a - z.to_dense(), 2))

    return _trials(one, trials, threads)


def frobenius_residuals(
    a: np.ndarray, k: int, p: int, q: int, trials: int, seed=0, threads: int = 1
) -> np.ndarray:
    """``||(I - P_Y) A||_F^2`` with ``Y = (A A^T)^q A Omega``, one per seed.

    ``P_Y`` comes from the re-orthonormalized power iteration, which spans the
    same range as ``Y`` in exact arithmetic.
    """
    a = np.asarray(a, dtype=float)

    def one(t):
        z = randomized_svd(a, RsvdParams(k, p, q, seed=(seed, t)))
        # P S Q^T = V V^T A for the sketch range V
        r = a - z.to_dense()
        return float(np.sum(r * r))

    return _trials(one, trials, threads)


def objective_gaps(
    x: SparseMatrix,
    z: PartialSVD,
    lam: float,
    k: int,
    q: int,
    trials: int,
    seed=0,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """``|f(Z) - f(Z_hat)|`` for one Soft Impute step from iterate ``z``.

    ``Z`` thresholds the exact rank-``k`` SVD of ``Y = P_omega(X) +
    P_omega_perp(z)``; ``Z_hat`` thresholds the rank-``k`` truncation of a
    randomized SVD with ``p = k``.  Returns the gaps and the singular
    values of ``Y``.
    """
    y = build_y(x, z)
    full = exact_svd(y)
    f_exact = objective(x, shrink(full.truncate(k), lam), lam)

    def one(t):
        approx = randomized_svd(y, RsvdParams(k, k, q, seed=(seed, t))).truncate(k)
        return abs(f_exact - objective(x, shrink(approx, lam), lam))

    return _trials(one, trials, threads), full.sigma
