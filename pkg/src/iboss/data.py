"""In-memory data matrix and file ingestion.

The covariate block is stored column-major (Fortran order) because every hot
path in this package walks one covariate column at a time over millions of
rows.  Two on-disk formats are supported:

* ``csv`` with a header row, parsed in fixed-size row chunks so peak memory
  stays a small multiple of the final matrix footprint;
* ``f64le-columnar``, a binary layout of little-endian float64 columns behind
  a 36-byte header ``{magic "IBOS", version u32, n u64, p u64,
  response-index u64}``.  Round trips are bit exact by construction.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, MissingResponse, NonPositiveForLog, ParseError

MAGIC = b"IBOS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQQQ")
_CSV_CHUNK_ROWS = 65536


@dataclass
class DataMatrix:
    """Full data (Z, y): n rows, p covariate columns, one response vector."""

    z: np.ndarray
    y: np.ndarray
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        if z.ndim != 2:
            raise DimensionMismatch("covariates must be a 2-D array")
        self.z = np.asfortranarray(z)
        self.y = np.ascontiguousarray(np.asarray(self.y, dtype=np.float64))
        n, p = self.z.shape
        if n < 1 or p < 1:
            raise DimensionMismatch("need n > 0 and p > 0")
        if self.y.shape != (n,):
            raise DimensionMismatch(
                f"response length {self.y.shape} does not match n={n}"
            )
        if not np.all(np.isfinite(self.z)) or not np.all(np.isfinite(self.y)):
            raise ValueError("all entries must be finite")
        if not self.names:
            self.names = [f"z{j + 1}" for j in range(p)] + ["y"]
        if len(self.names) != p + 1:
            raise DimensionMismatch("need one name per covariate plus the response")

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]

    def column(self, j: int) -> np.ndarray:
        return self.z[:, j]

    def design(self) -> np.ndarray:
        """[1, Z] with an explicit intercept column."""
        return np.column_stack([np.ones(self.n), self.z])


def _transform_columns(names: list[str], transform: str | None,
                       exclude: tuple[str, ...]) -> set[int]:
    """Indices (over names) whose values get log-transformed."""
    if transform in (None, "none"):
        return set()
    if transform == "log":
        return set(range(len(names)))
    if transform == "log-excluding":
        missing = [c for c in exclude if c not in names]
        if missing:
            raise MissingResponse(f"unknown column(s) in exclusion list: {missing}")
        return {i for i, c in enumerate(names) if c not in exclude}
    raise ValueError(f"unknown transform {transform!r}")


def load_csv(path, response: str, transform: str | None = None,
             exclude_from_transform: tuple[str, ...] = ()) -> DataMatrix:
    """Stream a numeric CSV with header into a DataMatrix.

    ``transform`` is one of None/"none", "log" (all columns) or
    "log-excluding" with ``exclude_from_transform`` naming the untouched
    columns.  Rows that fail to parse raise ParseError with their 1-based file
    line number; non-positive values in a log column raise NonPositiveForLog.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, "empty file") from None
        header = [h.strip() for h in header]
        if response not in header:
            raise MissingResponse(f"response column {response!r} not in header {header}")
        ncols = len(header)
        log_cols = sorted(_transform_columns(header, transform, exclude_from_transform))

        chunks: list[np.ndarray] = []
        buf = np.empty((_CSV_CHUNK_ROWS, ncols))
        fill = 0
        base_line = 2  # file line of the first row in the current chunk
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != ncols:
                raise ParseError(line_no, f"expected {ncols} fields, got {len(row)}")
            try:
                buf[fill] = [float(v) for v in row]
            except ValueError:
                raise ParseError(line_no, f"non-numeric value in {row}") from None
            fill += 1
            if fill == _CSV_CHUNK_ROWS:
                chunks.append(_finish_chunk(buf[:fill], log_cols, header, base_line))
                base_line = line_no + 1
                fill = 0
        if fill:
            chunks.append(_finish_chunk(buf[:fill], log_cols, header, base_line))
    if not chunks:
        raise ParseError(2, "no data rows")
    full = np.concatenate(chunks, axis=0)
    chunks.clear()
    if not np.all(np.isfinite(full)):
        bad = int(np.flatnonzero(~np.isfinite(full).all(axis=1))[0])
        raise ParseError(bad + 2, "non-finite value")
    ridx = header.index(response)
    keep = [j for j in range(ncols) if j != ridx]
    names = [header[j] for j in keep] + [header[ridx]]
    # column-by-column move into the final layout keeps peak memory at
    # roughly twice the matrix footprint
    z = np.empty((full.shape[0], len(keep)), order="F")
    for out_j, j in enumerate(keep):
        z[:, out_j] = full[:, j]
    y = full[:, ridx].copy()
    del full
    return DataMatrix(z=z, y=y, names=names)


def _finish_chunk(block: np.ndarray, log_cols: list[int], header: list[str],
                  base_line: int) -> np.ndarray:
    block = block.copy()
    for j in log_cols:
        col = block[:, j]
        bad = np.flatnonzero(col <= 0.0)
        if bad.size:
            raise NonPositiveForLog(header[j], base_line + int(bad[0]))
        block[:, j] = np.log(col)
    return block


def save_binary(data: DataMatrix, path) -> None:
    """Write the f64le-columnar format: covariate columns, then the response."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, data.n, data.p, data.p))
        for j in range(data.p):
            fh.write(np.ascontiguousarray(data.z[:, j]).tobytes())
        fh.write(data.y.tobytes())


def load_binary(path, names: list[str] | None = None) -> DataMatrix:
    """Read the f64le-columnar format back into a DataMatrix."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ParseError(1, "truncated header")
        magic, version, n, p, ridx = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ParseError(1, f"bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise ParseError(1, f"unsupported version {version}")
        ncols = p + 1
        if ridx >= ncols:
            raise ParseError(1, f"response index {ridx} out of range")
        raw = np.fromfile(fh, dtype="<f8", count=n * ncols)
    if raw.size != n * ncols:
        raise ParseError(1, f"expected {n * ncols} values, found {raw.size}")
    cols = raw.reshape(ncols, n)
    keep = [j for j in range(ncols) if j != ridx]
    z = np.empty((n, p), order="F")
    for out_j, j in enumerate(keep):
        z[:, out_j] = cols[j]
    return DataMatrix(z=z, y=cols[ridx].copy(), names=names or [])


def load_dataset(path, fmt: str, response: str, transform: str | None = None,
                 exclude_from_transform: tuple[str, ...] = ()) -> DataMatrix:
    """Dispatch on format tag; see load_csv / load_binary."""
    if fmt == "csv":
        return load_csv(path, response, transform, exclude_from_transform)
    if fmt == "f64le-columnar":
        if transform not in (None, "none"):
            raise ValueError("transforms apply to CSV ingestion only")
        return load_binary(path)
    raise ValueError(f"unknown format {fmt!r}")
