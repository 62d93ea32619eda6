"""Synthetic sequence of growing, increasingly observed low-rank matrices.

The underlying matrix is ``P diag(s) Q^T`` at the final size, with Haar
random orthonormal ``P``, ``Q`` and singular values drawn uniformly on
``(0, 1]``, scaled so the entries of the full matrix have unit standard
deviation.  Matrix ``i`` of the sequence is the top-left block of the
current size.  Observation and train/test membership come from one uniform
draw per cell, so observed sets are nested along the sequence and a cell
never switches between train and test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .online import MatrixSequence
from .rsvd import gaussian_block, orthonormalize, rng_for
from .sparse import PartialSVD, SparseMatrix

__all__ = ["SyntheticSpec", "SyntheticData", "generate_synthetic", "sequence_shapes"]


@dataclass(frozen=True)
class SyntheticSpec:
    t_total: int = 20
    size_start: tuple[int, int] = (5000, 1000)
    size_end: tuple[int, int] = (10000, 1500)
    rank: int = 50
    obs_prob_start: float = 0.03
    obs_prob_end: float = 0.10
    noise_std: float = 0.1
    seed: int = 0
    scale: float = 1.0
    train_fraction: float = 0.5

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.t_total < 1:
            raise ValueError("t_total must be >= 1")
        for p in (self.obs_prob_start, self.obs_prob_end, self.train_fraction):
            if not 0 < p <= 1:
                raise ValueError(f"probability {p} outside (0, 1]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        start, end = self.scaled_start, self.scaled_end
        if min(start) < 1 or end[0] < start[0] or end[1] < start[1]:
            raise ValueError(f"bad sizes {start} -> {end}")
        if not 1 <= self.rank <= min(end):
            raise ValueError(f"rank {self.rank} incompatible with sizes")

    @property
    def scaled_start(self) -> tuple[int, int]:
        return tuple(int(round(d * self.scale)) for d in self.size_start)

    @property
    def scaled_end(self) -> tuple[int, int]:
        return tuple(int(round(d * self.scale)) for d in self.size_end)


@dataclass(frozen=True)
class SyntheticData:
    train: MatrixSequence
    test: MatrixSequence
    truth: PartialSVD
    probabilities: tuple[float, ...]


def sequence_shapes(spec: SyntheticSpec) -> list[tuple[int, int]]:
    """Constant for the first half, then linear growth to the final size."""
    T = spec.t_total
    half = T // 2
    (m0, n0), (m1, n1) = spec.scaled_start, spec.scaled_end
    shapes = []
    for i in range(T):
        t = 0.0 if i < half else (i - half + 1) / (T - half)
        shapes.append((int(round(m0 + t * (m1 - m0))), int(round(n0 + t * (n1 - n0)))))
    return shapes


def _probabilities(spec: SyntheticSpec) -> list[float]:
    T = spec.t_total
    half = max(T // 2, 1)
    out = []
    for i in range(T):
        if i >= half:
            out.append(spec.obs_prob_end)
        elif half == 1:
            out.append(spec.obs_prob_start)
        else:
            frac = i / (half - 1)
            out.append(spec.obs_prob_start + frac * (spec.obs_prob_end - spec.obs_prob_start))
    return out


def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    rng = rng_for((spec.seed, 0))
    m, n = spec.scaled_end
    r = spec.rank
    P = orthonormalize(gaussian_block(m, r, (spec.seed, 1)))
    Q = orthonormalize(gaussian_block(n, r, (spec.seed, 2)))
    s = np.sort(1.0 - rng.random(r))[::-1]
    # global std of the dense m x n matrix, from the factors
    mean = float((P.sum(axis=0) * s) @ Q.sum(axis=0)) / (m * n)
    second = float(s @ s) / (m * n)
    s = s / np.sqrt(second - mean**2)
    truth = PartialSVD(P, s, Q)

    shapes = sequence_shapes(spec)
    probs = _probabilities(spec)
    cell_rng = rng_for((spec.seed, 3))
    observe = cell_rng.random((m, n))
    rows, cols = np.nonzero(observe < max(probs))
    u = observe[rows, cols]
    coin = cell_rng.random(rows.size)
    values = np.einsum("ij,ij->i", P[rows] * s, Q[cols])
    values = values + spec.noise_std * cell_rng.standard_normal(rows.size)
    is_train = coin < spec.train_fraction

    train, test = [], []
    for (mi, ni), pi in zip(shapes, probs):
        keep = (rows < mi) & (cols < ni) & (u < pi)
        for out, part in ((train, keep & is_train), (test, keep & ~is_train)):
            out.append(SparseMatrix((mi, ni), rows[part], cols[part], values[part]))
    labels = tuple(f"t{i:02d}" for i in range(spec.t_total))
    return SyntheticData(
        MatrixSequence(tuple(train), labels),
        MatrixSequence(tuple(test), labels),
        truth,
        tuple(probs),
    )
