"""Timestamped rating files, interval slicing and train/test splits."""

from __future__ import annotations

import datetime as dt
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .online import MatrixSequence
from .rsvd import rng_for
from .sparse import SparseMatrix

__all__ = [
    "RatingRecord",
    "SliceSpec",
    "load_ratings",
    "slice_sequence",
    "split_train_test",
    "load_matrix",
    "write_matrix",
    "to_epoch",
]

DAY = 86400.0


@dataclass(frozen=True)
class RatingRecord:
    user_id: str
    item_id: str
    rating: float
    timestamp: float


def to_epoch(when) -> float:
    """Epoch seconds from a number, ``datetime`` (naive means UTC), ``date`` or ISO string."""
    if isinstance(when, (int, float, np.integer, np.floating)):
        return float(when)
    if isinstance(when, str):
        try:
            return float(when)
        except ValueError:
            when = dt.datetime.fromisoformat(when)
    if isinstance(when, dt.datetime):
        if when.tzinfo is None:
            when = when.replace(tzinfo=dt.timezone.utc)
        return when.timestamp()
    if isinstance(when, dt.date):
        return dt.datetime(when.year, when.month, when.day, tzinfo=dt.timezone.utc).timestamp()
    raise TypeError(f"cannot interpret {when!r} as a time")


def _split(line: str, delimiter: str | None) -> list[str]:
    return [f.strip() for f in line.split(delimiter)] if delimiter else line.split()


def load_ratings(
    path,
    delimiter: str | None = ",",
    columns: Sequence[str] = ("user", "item", "rating", "timestamp"),
    header: bool = False,
    scale: tuple[float, float] | None = (1.0, 5.0),
) -> list[RatingRecord]:
    """Parse one rating per line.

    ``columns`` names the field at each position; it must include ``user``,
    ``item``, ``rating`` and ``timestamp`` and may contain other names for
    fields to ignore.  ``delimiter=None`` splits on whitespace and multi-
    character delimiters (``"::"``) are allowed.  Ratings outside ``scale``
    raise :class:`DataError` with the offending line number.
    """
    pos = {name: i for i, name in enumerate(columns)}
    missing = {"user", "item", "rating", "timestamp"} - pos.keys()
    if missing:
        raise ValueError(f"columns missing {sorted(missing)}")
    width = max(pos[c] for c in ("user", "item", "rating", "timestamp")) + 1
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if header and lineno == 1:
                continue
            if not line.strip():
                continue
            fields = _split(line.rstrip("\r\n"), delimiter)
            if len(fields) < width:
                raise DataError(f"{path}:{lineno}: expected {width} fields, got {len(fields)}")
            try:
                rating = float(fields[pos["rating"]])
                ts = float(fields[pos["timestamp"]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if not (math.isfinite(rating) and math.isfinite(ts)):
                raise DataError(f"{path}:{lineno}: non-finite value")
            if scale is not None and not scale[0] <= rating <= scale[1]:
                raise DataError(f"{path}:{lineno}: rating {rating} outside scale {scale}")
            records.append(
                RatingRecord(fields[pos["user"]], fields[pos["item"]], rating, ts)
            )
    return records


@dataclass(frozen=True)
class SliceSpec:
    """Cut points ``start + i * interval_days`` for ``i = 0 .. count - 1``.

    ``start`` is anything :func:`to_epoch` accepts.  Users and items with
    fewer than the minimum number of ratings (counted over everything up to
    the last cut) are dropped before indexing.
    """

    start: object
    count: int
    interval_days: float = 30
    min_user_ratings: int = 0
    min_item_ratings: int = 0

    def __post_init__(self):
        if self.interval_days < 1:
            raise ValueError("interval_days must be >= 1")
        if self.count < 1:
            raise ValueError("count must be >= 1")

    def cutoffs(self) -> list[float]:
        t0 = to_epoch(self.start)
        return [t0 + i * self.interval_days * DAY for i in range(self.count)]


def _id_order(ids: Iterable[str]) -> list[str]:
    ids = set(ids)
    try:
        return sorted(ids, key=lambda s: (0, int(s), s))
    except ValueError:
        return sorted(ids)


def _latest(records: Sequence[RatingRecord]) -> dict[tuple[str, str], RatingRecord]:
    out: dict[tuple[str, str], RatingRecord] = {}
    for r in sorted(records, key=lambda r: r.timestamp):
        out[(r.user_id, r.item_id)] = r
    return out


def slice_sequence(records: Sequence[RatingRecord], spec: SliceSpec) -> MatrixSequence:
    """Cumulative rating matrices at each cut point.

    Matrix ``i`` holds every rating with ``timestamp <= cut_i``; a repeated
    (user, item) pair keeps its latest value up to that cut.  Row and column
    indices are shared by all matrices, so every matrix has the same shape.
    """
    if not records:
        raise DataError("no rating records")
    cuts = spec.cutoffs()
    window = [r for r in records if r.timestamp <= cuts[-1]]
    latest = _latest(window)
    users = Counter(u for u, _ in latest)
    items = Counter(i for _, i in latest)
    kept = [
        r
        for r in window
        if users[r.user_id] >= spec.min_user_ratings and items[r.item_id] >= spec.min_item_ratings
    ]
    if not kept:
        raise DataError("no ratings left after filtering")
    user_index = {u: i for i, u in enumerate(_id_order(r.user_id for r in kept))}
    item_index = {u: i for i, u in enumerate(_id_order(r.item_id for r in kept))}
    shape = (len(user_index), len(item_index))

    kept.sort(key=lambda r: r.timestamp)
    stamps = np.array([r.timestamp for r in kept])
    matrices, labels = [], []
    for cut in cuts:
        upto = kept[: int(np.searchsorted(stamps, cut, side="right"))]
        if not upto:
            label = dt.datetime.fromtimestamp(cut, dt.timezone.utc).isoformat()
            raise DataError(f"no ratings on or before cut point {label}")
        cells = _latest(upto)
        rows = np.array([user_index[u] for u, _ in cells])
        cols = np.array([item_index[i] for _, i in cells])
        vals = np.array([r.rating for r in cells.values()])
        matrices.append(SparseMatrix(shape, rows, cols, vals))
        labels.append(dt.datetime.fromtimestamp(cut, dt.timezone.utc).date().isoformat())
    return MatrixSequence(tuple(matrices), tuple(labels))


def split_train_test(
    x: SparseMatrix, train_fraction: float = 0.8, seed=0
) -> tuple[SparseMatrix, SparseMatrix]:
    """Uniformly random partition of the observed entries.

    The training part gets ``ceil(train_fraction * nnz)`` entries.
    """
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n_train = math.ceil(train_fraction * x.nnz)
    perm = rng_for(seed).permutation(x.nnz)
    return x.subset(np.sort(perm[:n_train])), x.subset(np.sort(perm[n_train:]))


def write_matrix(path, x: SparseMatrix, index_base: int = 1) -> None:
    """Write ``row,col,value`` lines with ``index_base``-based indices."""
    with open(path, "w", newline="") as fh:
        for r, c, v in zip(x.rows, x.cols, x.values):
            fh.write(f"{r + index_base},{c + index_base},{float(v)!r}\n")


def load_matrix(path, shape: tuple[int, int], index_base: int = 1, delimiter: str = ",") -> SparseMatrix:
    """Read a file written by :func:`write_matrix`."""
    rows, cols, vals = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = _split(line.strip(), delimiter)
            if len(fields) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(fields)}")
            try:
                rows.append(int(fields[0]) - index_base)
                cols.append(int(fields[1]) - index_base)
                vals.append(float(fields[2]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    try:
        return SparseMatrix(tuple(shape), np.array(rows, dtype=np.int64),
                            np.array(cols, dtype=np.int64), np.array(vals))
    except ValueError as exc:
        raise DataError(f"{Path(path).name}: {exc}") from None
