"""Cross-validated choice of the shrinkage level ``rho`` and rank budget ``k``."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .metrics import rmse
from .rsvd import rng_for
from .softimpute import SolverConfig, lambda_from_rho, solve_path
from .sparse import SparseMatrix

__all__ = ["ModelSelectionGrid", "fold_indices", "cross_validate", "best_point", "select_model"]


@dataclass(frozen=True)
class ModelSelectionGrid:
    rhos: tuple[float, ...] = tuple(round(0.05 * i, 2) for i in range(1, 9))
    ks: tuple[int, ...] = (8, 16, 32, 64, 128)
    folds: int = 5
    max_sampled_entries: int = 5_000_000

    def __post_init__(self):
        if not self.rhos or not self.ks:
            raise ValueError("grid must be nonempty")
        if len(set(self.rhos)) != len(self.rhos) or min(self.rhos) < 0:
            raise ValueError("rhos must be distinct and nonnegative")
        if min(self.ks) < 1:
            raise ValueError("ks must be positive")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")


def fold_indices(nnz: int, grid: ModelSelectionGrid, seed=0) -> list[np.ndarray]:
    """Sample at most ``max_sampled_entries`` positions and split them into folds."""
    rng = rng_for(seed)
    if nnz > grid.max_sampled_entries:
        sample = rng.choice(nnz, size=grid.max_sampled_entries, replace=False)
    else:
        sample = rng.permutation(nnz)
    return [np.sort(f) for f in np.array_split(sample, grid.folds)]


def _path_scores(x, train_idx, val_idx, rhos, k, config):
    train = x.subset(train_idx)
    val = x.subset(val_idx)
    k = min(k, *x.shape)
    cfg = replace(config, rsvd_params=replace(config.rsvd_params, k=k), lambdas=())
    sigma1 = lambda_from_rho(train, 1.0)
    lams = [rho * sigma1 for rho in rhos]
    sols = solve_path(train, lams, cfg)
    return [rmse(val, s.z) for s in sols]


def cross_validate(
    x: SparseMatrix,
    grid: ModelSelectionGrid,
    config: SolverConfig,
    seed=0,
    threads: int = 1,
) -> dict[tuple[float, int], float]:
    """Mean validation RMSE for every ``(rho, k)`` grid point.

    For each fold and rank budget the ``rho`` values run as one warm-started
    path from the largest down.  Tasks are independent, so ``threads`` only
    changes wall time.
    """
    folds = fold_indices(x.nnz, grid, seed)
    rhos = sorted(grid.rhos, reverse=True)
    tasks = []
    for f, val_idx in enumerate(folds):
        train_idx = np.sort(np.concatenate([g for i, g in enumerate(folds) if i != f]))
        for k in grid.ks:
            tasks.append((train_idx, val_idx, k))

    def run(task):
        train_idx, val_idx, k = task
        return _path_scores(x, train_idx, val_idx, rhos, k, config)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]

    totals: dict[tuple[float, int], list[float]] = {}
    for (_, _, k), scores in zip(tasks, results):
        for rho, score in zip(rhos, scores):
            totals.setdefault((rho, k), []).append(score)
    return {key: float(np.mean(v)) for key, v in totals.items()}


def best_point(scores: dict[tuple[float, int], float]) -> tuple[float, int]:
    """Lowest score; ties go to the smaller ``k``, then the larger ``rho``."""
    return min(scores, key=lambda key: (scores[key], key[1], -key[0]))


def select_model(
    x: SparseMatrix,
    grid: ModelSelectionGrid,
    config: SolverConfig,
    seed=0,
    threads: int = 1,
) -> tuple[float, int]:
    """``(rho, k)`` with the lowest mean validation RMSE.

    Ties go to the smaller ``k``, then the larger ``rho``.
    """
    return best_point(cross_validate(x, grid, config, seed, threads))
