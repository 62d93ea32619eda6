"""Row centering of observed entries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import SparseMatrix

__all__ = ["CenteringInfo", "center_rows", "apply_centering", "uncenter"]


@dataclass(frozen=True, eq=False)
class CenteringInfo:
    """Per-row mean of the observed training entries; 0 for empty rows."""

    row_means: np.ndarray

    def means_for(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.int64)
        out = np.zeros(rows.size)
        known = rows < self.row_means.size
        out[known] = self.row_means[rows[known]]
        return out


def center_rows(train: SparseMatrix) -> tuple[SparseMatrix, CenteringInfo]:
    m = train.shape[0]
    counts = np.bincount(train.rows, minlength=m)
    sums = np.bincount(train.rows, weights=train.values, minlength=m)
    means = np.divide(sums, counts, out=np.zeros(m), where=counts > 0)
    info = CenteringInfo(means)
    return apply_centering(train, info), info


def apply_centering(test: SparseMatrix, info: CenteringInfo) -> SparseMatrix:
    """Shift ``test`` by the training row means."""
    return test.with_values(test.values - info.means_for(test.rows))


def uncenter(values: np.ndarray, rows: np.ndarray, info: CenteringInfo) -> np.ndarray:
    """Add row means back to predictions ``values`` made at rows ``rows``."""
    return np.asarray(values, dtype=float) + info.means_for(rows)
