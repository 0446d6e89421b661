"""Deterministic subdata selection driven by per-column extremes.

The selector walks the covariates one at a time and keeps, for each, the rows
with the most extreme values on both tails.  Two modes:

* ``sequential``: rows picked for earlier columns are excluded before later
  columns are scanned, so the subdata size is exactly k;
* ``parallel-merge``: every column is scanned independently (optionally on a
  thread pool) and the index sets are unioned, so duplicated extremes can
  shrink the result below k.

Per-side extraction is partition based: an in-place introselect on a reused
value buffer pins the threshold order statistic in average O(n), and one
comparison scan collects the rows.  Ties break to the lowest row index, which
makes the output reproducible across runs, platforms and thread counts.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import DataMatrix
from .errors import DimensionMismatch, InsufficientRows

MODES = ("sequential", "parallel-merge")


def thread_budget() -> int:
    """Parallelism cap from the IBOSS_THREADS environment variable (default 1)."""
    raw = os.environ.get("IBOSS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class SelectionSpec:
    """Target size k, selection mode, and the (fixed) tie-break rule."""

    k: int
    mode: str = "sequential"
    tie_break: str = "lowest-row-index"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.tie_break != "lowest-row-index":
            raise ValueError("only lowest-row-index tie-breaking is supported")
        if self.k < 2:
            raise ValueError("k must be at least 2")

    def quotas(self, p: int) -> list[tuple[int, int]]:
        """Per-column (lower, upper) pick counts summing to k.

        Base quota is floor(k / (2p)) per side; the remainder is handed out
        one pick at a time, alternating lower then upper side, in column
        order.
        """
        if self.k < 2 * p:
            raise ValueError(f"need k >= 2p, got k={self.k}, p={p}")
        base = self.k // (2 * p)
        remainder = self.k - 2 * p * base
        lower = [base] * p
        upper = [base] * p
        for i in range(remainder):
            if i % 2 == 0:
                lower[i // 2] += 1
            else:
                upper[i // 2] += 1
        return list(zip(lower, upper))

    def validate(self, data: DataMatrix) -> None:
        if self.k > data.n:
            raise ValueError(f"k={self.k} exceeds n={data.n}")
        if self.k < 2 * data.p:
            raise ValueError(f"k={self.k} is below 2p={2 * data.p}")


@dataclass
class Subdata:
    """Selected rows: sorted indices, materialized (Z*, y*), and provenance."""

    indices: np.ndarray
    z: np.ndarray
    y: np.ndarray
    method_tag: str
    provenance: dict = field(default_factory=dict)

    @property
    def k_eff(self) -> int:
        return self.indices.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]

    def design(self) -> np.ndarray:
        return np.column_stack([np.ones(self.k_eff), self.z])


def _tail_indices(values: np.ndarray, r: int, remaining: int, largest: bool,
                  part_buf: np.ndarray | None = None) -> np.ndarray:
    """Global indices of the r most extreme live entries of ``values``.

    Excluded rows are expected to carry a +inf (smallest side) or -inf
    (largest side) sentinel so they sort away from the wanted tail;
    ``remaining`` counts the live entries (must be >= r).  An in-place value
    partition on a reusable buffer pins the threshold order statistic, one
    comparison scan collects the candidates (ascending, so ties resolve to
    the lowest row index), and no length-n array is ever allocated in the
    steady state.  Sentinels never collide with a threshold because the
    threshold is always finite.
    """
    n = values.shape[0]
    if r == remaining and remaining == n:
        return np.arange(n, dtype=np.int64)
    if part_buf is None:
        part_buf = np.empty(n)
    np.copyto(part_buf, values)
    if largest:
        part_buf.partition(n - r)
        threshold = float(part_buf[n - r])
        cand = np.flatnonzero(values >= threshold)
        strict = values[cand] > threshold
    else:
        part_buf.partition(r - 1)
        threshold = float(part_buf[r - 1])
        cand = np.flatnonzero(values <= threshold)
        strict = values[cand] < threshold
    if cand.shape[0] == r:
        return cand
    need = r - int(np.count_nonzero(strict))
    return np.concatenate([cand[strict], cand[~strict][:need]])


def partial_extreme_indices(column, r: int, side: str = "smallest",
                            excluded=None) -> np.ndarray:
    """Indexes of the r smallest or largest entries, ignoring excluded rows.

    Average O(n) via partition-based selection; ties break to the lowest row
    index.  Raises InsufficientRows when fewer than r candidates remain.
    """
    col = np.asarray(column, dtype=np.float64)
    if col.ndim != 1:
        raise DimensionMismatch("column must be 1-D")
    if side not in ("smallest", "largest"):
        raise ValueError(f"side must be 'smallest' or 'largest', got {side!r}")
    if r < 1:
        raise ValueError("r must be at least 1")
    n = col.shape[0]
    largest = side == "largest"
    if excluded is None:
        excl = np.empty(0, dtype=np.int64)
    else:
        excl = np.unique(np.asarray(
            list(excluded) if not isinstance(excluded, np.ndarray) else excluded,
            dtype=np.int64))
    remaining = n - excl.shape[0]
    if remaining < r:
        raise InsufficientRows(f"need {r} rows but only {remaining} remain")
    if excl.shape[0] == 0:
        picked = _tail_indices(col, r, n, largest)
    else:
        scratch = col.copy()
        scratch[excl] = -np.inf if largest else np.inf
        picked = _tail_indices(scratch, r, remaining, largest)
    return np.sort(picked).astype(np.int64, copy=False)


def _both_tails(col: np.ndarray, excl: np.ndarray, lo: int, up: int,
                scratch: np.ndarray | None = None,
                part_buf: np.ndarray | None = None) -> np.ndarray:
    """Both-tail picks for one column: lower tail from the live pool, upper
    tail from the live pool minus the lower picks, so the two never overlap
    (matters for near-constant columns where the tails meet).

    ``excl`` are rows already claimed by earlier columns; ``scratch`` and
    ``part_buf`` are reusable length-n buffers (None allocates on the fly).
    """
    n = col.shape[0]
    remaining = n - excl.shape[0]
    if remaining < lo + up:
        raise InsufficientRows(
            f"column quota {lo}+{up} exceeds the {remaining} remaining rows"
        )
    if scratch is None:
        scratch = np.empty(n)
    if excl.shape[0] == 0:
        low_pick = _tail_indices(col, lo, remaining, False, part_buf)
    else:
        np.copyto(scratch, col)
        scratch[excl] = np.inf
        low_pick = _tail_indices(scratch, lo, remaining, False, part_buf)
    np.copyto(scratch, col)
    if excl.shape[0]:
        scratch[excl] = -np.inf
    scratch[low_pick] = -np.inf
    high_pick = _tail_indices(scratch, up, remaining - lo, True, part_buf)
    return np.concatenate([low_pick, high_pick])


def iboss_dopt(data: DataMatrix, spec: SelectionSpec,
               threads: int | None = None) -> Subdata:
    """Select the extreme-value subdata and materialize (Z*, y*).

    Sequential mode processes columns in order, excluding rows already taken;
    parallel-merge scans columns independently and unions the picks.  Output
    is identical for any thread count.
    """
    spec.validate(data)
    quotas = spec.quotas(data.p)
    per_column: list[int] = []
    if spec.mode == "sequential":
        scratch = np.empty(data.n)
        part_buf = np.empty(data.n)
        taken = np.empty(spec.k, dtype=np.int64)
        count = 0
        for j, (lo, up) in enumerate(quotas):
            picks = _both_tails(data.column(j), taken[:count], lo, up,
                                scratch, part_buf)
            taken[count:count + picks.shape[0]] = picks
            count += picks.shape[0]
            per_column.append(int(picks.shape[0]))
        indices = np.sort(taken[:count]).astype(np.int64, copy=False)
    else:
        workers = threads if threads is not None else thread_budget()
        no_excl = np.empty(0, dtype=np.int64)
        jobs = [(data.column(j), lo, up) for j, (lo, up) in enumerate(quotas)]
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                sets = list(pool.map(
                    lambda job: _both_tails(job[0], no_excl, job[1], job[2]),
                    jobs))
        else:
            scratch = np.empty(data.n)
            part_buf = np.empty(data.n)
            sets = [_both_tails(col, no_excl, lo, up, scratch, part_buf)
                    for col, lo, up in jobs]
        per_column = [int(s.shape[0]) for s in sets]
        indices = np.unique(np.concatenate(sets)).astype(np.int64)
    return Subdata(
        indices=indices,
        z=np.array(data.z[indices, :]),
        y=np.array(data.y[indices]),
        method_tag="dopt",
        provenance={
            "mode": spec.mode,
            "k": spec.k,
            "k_eff": int(indices.shape[0]),
            "tie_break": spec.tie_break,
            "quotas": [list(q) for q in quotas],
            "per_column_selected": per_column,
            "quota_rule": "alternating-lower-upper-in-column-order",
        },
    )


def take_rows(data: DataMatrix, indices, method_tag: str) -> Subdata:
    """Materialize an arbitrary sorted row subset as Subdata."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or np.any(idx < 0) or np.any(idx >= data.n):
        raise DimensionMismatch("indices out of range")
    idx = np.unique(idx)
    return Subdata(indices=idx, z=np.array(data.z[idx, :]),
                   y=np.array(data.y[idx]), method_tag=method_tag)


def full_column_ranges(data: DataMatrix) -> np.ndarray:
    """Per-column (min, max) in one O(np) sweep; shape (p, 2)."""
    out = np.empty((data.p, 2))
    out[:, 0] = data.z.min(axis=0)
    out[:, 1] = data.z.max(axis=0)
    return out


def quantile_column_ranges(data: DataMatrix, r: int) -> np.ndarray:
    """Per-column (r-th smallest, r-th largest) order statistics; shape (p, 2)."""
    if not 1 <= r <= data.n // 2:
        raise ValueError(f"need 1 <= r <= n/2, got r={r}, n={data.n}")
    out = np.empty((data.p, 2))
    for j in range(data.p):
        col = data.column(j)
        out[j, 0] = np.partition(col, r - 1)[r - 1]
        out[j, 1] = np.partition(col, data.n - r)[data.n - r]
    return out


def full_means(data: DataMatrix) -> tuple[float, np.ndarray]:
    """(y_bar, z_bar) from one streaming pass over the full data."""
    return float(data.y.mean()), data.z.mean(axis=0)
