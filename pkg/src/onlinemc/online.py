"""Online completion over a sequence of growing partially observed matrices."""

from __future__ import annotations

import csv
import enum
import io
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError
from .metrics import rmse, sigma_drift, subspace_drift
from .postprocess import postprocess_sigma
from .preprocess import apply_centering, center_rows
from .softimpute import SolverConfig, lambda_from_rho, solve
from .sparse import PartialSVD, SparseMatrix, pad

__all__ = [
    "RestartMode",
    "MatrixSequence",
    "SequenceRecord",
    "SequenceResult",
    "CSV_COLUMNS",
    "run_sequence",
]


class RestartMode(str, enum.Enum):
    WARM = "warm"
    COLD = "cold"


@dataclass(frozen=True)
class MatrixSequence:
    matrices: tuple[SparseMatrix, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        matrices = tuple(self.matrices)
        labels = tuple(self.labels) or tuple(f"{i:02d}" for i in range(len(matrices)))
        if not matrices:
            raise ValueError("a sequence needs at least one matrix")
        if len(labels) != len(matrices):
            raise ValueError("one label per matrix required")
        object.__setattr__(self, "matrices", matrices)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.matrices)

    def __getitem__(self, i):
        return self.matrices[i]

    def __iter__(self):
        return iter(self.matrices)

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [x.shape for x in self.matrices]


CSV_COLUMNS = (
    "label",
    "train_rmse",
    "test_rmse",
    "theta_P",
    "theta_Q",
    "phi_sigma",
    "seconds",
    "rank",
    "lambda",
    "iterations",
)


@dataclass
class SequenceRecord:
    label: str
    train_rmse: float
    test_rmse: float
    theta_P: float
    theta_Q: float
    phi_sigma: float
    wall_time: float
    rank: int
    lam: float
    iterations: int
    restart_mode: str
    converged: bool = True
    objective: float = math.nan
    drift_trace: list = field(default_factory=list, repr=False)

    def csv_row(self) -> list[str]:
        def f(v):
            return repr(float(v))

        return [
            self.label,
            f(self.train_rmse),
            f(self.test_rmse),
            f(self.theta_P),
            f(self.theta_Q),
            f(self.phi_sigma),
            f"{self.wall_time:.3f}",
            str(self.rank),
            f(self.lam),
            str(self.iterations),
        ]


@dataclass
class SequenceResult:
    records: list[SequenceRecord]
    solutions: list[PartialSVD] = field(default_factory=list, repr=False)

    @property
    def total_iterations(self) -> int:
        return sum(r.iterations for r in self.records)

    @property
    def total_seconds(self) -> float:
        return sum(r.wall_time for r in self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow(r.csv_row())
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def _check_growth(shapes: Sequence[tuple[int, int]]) -> None:
    for (m0, n0), (m1, n1) in zip(shapes, shapes[1:]):
        if m1 < m0 or n1 < n0:
            raise DimensionError(f"matrix shrinks from {(m0, n0)} to {(m1, n1)}")


def run_sequence(
    train: MatrixSequence,
    config: SolverConfig,
    restart_mode: RestartMode | str = RestartMode.WARM,
    test: MatrixSequence | None = None,
    rho: float | None = 0.5,
    lam: float | None = None,
    center: bool = True,
    postprocess: bool = True,
    postprocess_cap: int = 1_000_000,
) -> SequenceResult:
    """Complete each matrix of ``train`` in order.

    In warm mode the solve for matrix ``i + 1`` starts from the (zero padded)
    solution for matrix ``i``; in cold mode every solve starts from zero.
    The regularization is ``lam`` if given, otherwise ``rho * sigma_1`` of
    each centered training matrix.  Drift measures compare the reported
    solutions of consecutive matrices and are NaN for the first one.
    """
    restart_mode = RestartMode(restart_mode)
    if test is not None and len(test) != len(train):
        raise ValueError("train and test sequences differ in length")
    if lam is None and rho is None:
        raise ValueError("give either rho or lam")
    _check_growth(train.shapes)
    if test is not None:
        for x, t in zip(train, test):
            if x.shape != t.shape:
                raise DimensionError(f"train {x.shape} vs test {t.shape}")

    records: list[SequenceRecord] = []
    solutions: list[PartialSVD] = []
    raw_prev: PartialSVD | None = None
    final_prev: PartialSVD | None = None
    for i, x in enumerate(train):
        t = test[i] if test is not None else None
        if center:
            x, info = center_rows(x)
            if t is not None:
                t = apply_centering(t, info)
        lam_i = lam if lam is not None else lambda_from_rho(x, rho)
        z_init = None
        if restart_mode is RestartMode.WARM and raw_prev is not None:
            z_init = pad(raw_prev, *x.shape)

        start = time.perf_counter()
        sol = solve(x, lam_i, z_init, config, stream=i)
        elapsed = time.perf_counter() - start

        z = sol.z
        if postprocess and z.rank:
            z = postprocess_sigma(x, z, postprocess_cap, seed=(*_base(config), i))
        if final_prev is None:
            theta_p = theta_q = phi = math.nan
        else:
            prev = pad(final_prev, *x.shape)
            theta_p = subspace_drift(z.P, prev.P, check=False)
            theta_q = subspace_drift(z.Q, prev.Q, check=False)
            phi = sigma_drift(z.sigma, prev.sigma)
        records.append(
            SequenceRecord(
                label=train.labels[i],
                train_rmse=rmse(x, z) if x.nnz else math.nan,
                test_rmse=rmse(t, z) if t is not None and t.nnz else math.nan,
                theta_P=theta_p,
                theta_Q=theta_q,
                phi_sigma=phi,
                wall_time=elapsed,
                rank=z.rank,
                lam=lam_i,
                iterations=sol.iterations,
                restart_mode=restart_mode.value,
                converged=sol.converged,
                objective=sol.objective_trace[-1],
                drift_trace=sol.drift_trace,
            )
        )
        solutions.append(z)
        raw_prev = sol.z
        final_prev = z
    return SequenceResult(records, solutions)


def _base(config: SolverConfig) -> tuple[int, ...]:
    return tuple(int(s) for s in np.atleast_1d(config.rsvd_params.seed))
