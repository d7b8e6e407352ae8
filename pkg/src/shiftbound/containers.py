"""On-disk containers for matrices and label vectors.

Binary layout (little-endian throughout):
  matrix: magic "DSB1MATX" | rows u64 | cols u64 | rows*cols float32, row-major
  labels: magic "DSB1LABL" | count u64 | count int32

CSV is accepted as an interchange alternative: comma-separated decimal
floats, one row per line, optionally preceded by a single header line
starting with '#'. Values are stored single-precision but always loaded
into float64 for computation.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .validation import ValidationError

MATRIX_MAGIC = b"DSB1MATX"
LABEL_MAGIC = b"DSB1LABL"


def _is_binary(path: Path) -> bool:
    with open(path, "rb") as fh:
        head = fh.read(8)
    return head in (MATRIX_MAGIC, LABEL_MAGIC)


def write_matrix(path, matrix) -> None:
    arr = np.ascontiguousarray(np.asarray(matrix, dtype=np.float64))
    if arr.ndim != 2:
        raise ValidationError(f"write_matrix({path}): expected 2-D data, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"write_matrix({path}): data contains NaN/Inf")
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<QQ", arr.shape[0], arr.shape[1]))
        fh.write(arr.astype("<f4").tobytes(order="C"))


def write_matrix_csv(path, matrix, header: str | None = None) -> None:
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"write_matrix_csv({path}): expected 2-D data")
    with open(path, "w", encoding="ascii") as fh:
        if header:
            fh.write(f"# {header}\n")
        for row in arr.astype(np.float32):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_matrix(path, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Load a matrix from the binary container or CSV, validating shape if given."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"read_matrix: file not found: {path}")
    if _is_binary(path):
        arr = _read_matrix_binary(path)
    else:
        arr = _read_matrix_csv(path)
    if rows is not None and arr.shape[0] != rows:
        raise ValidationError(f"read_matrix({path}): expected {rows} rows, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise ValidationError(f"read_matrix({path}): expected {cols} cols, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"read_matrix({path}): contains NaN/Inf entries")
    return arr


def _read_matrix_binary(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MATRIX_MAGIC:
            raise ValidationError(f"read_matrix({path}): bad magic {magic!r}")
        header = fh.read(16)
        if len(header) != 16:
            raise ValidationError(f"read_matrix({path}): truncated header")
        n, d = struct.unpack("<QQ", header)
        payload = fh.read()
    expected = n * d * 4
    if len(payload) != expected:
        raise ValidationError(
            f"read_matrix({path}): payload length {len(payload)} bytes, "
            f"expected {expected} for {n}x{d}"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(n, d)
    return arr.astype(np.float64)


def _read_matrix_csv(path: Path) -> np.ndarray:
    rows = []
    width = None
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if lineno == 1:
                    continue
                raise ValidationError(f"read_matrix({path}): stray header at line {lineno}")
            try:
                values = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise ValidationError(f"read_matrix({path}): bad value at line {lineno}: {exc}")
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ValidationError(
                    f"read_matrix({path}): ragged row at line {lineno} "
                    f"({len(values)} values, expected {width})"
                )
            rows.append(values)
    if not rows:
        raise ValidationError(f"read_matrix({path}): no data rows")
    # round-trip through f4 so CSV and binary encodings of the same data agree
    return np.asarray(rows, dtype=np.float32).astype(np.float64)


def write_labels(path, labels) -> None:
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ValidationError(f"write_labels({path}): expected 1-D labels")
    arr = arr.astype("<i4")
    with open(path, "wb") as fh:
        fh.write(LABEL_MAGIC)
        fh.write(struct.pack("<Q", arr.shape[0]))
        fh.write(arr.tobytes(order="C"))


def read_labels(path, count: int | None = None) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"read_labels: file not found: {path}")
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != LABEL_MAGIC:
            raise ValidationError(f"read_labels({path}): bad magic {magic!r}")
        header = fh.read(8)
        if len(header) != 8:
            raise ValidationError(f"read_labels({path}): truncated header")
        (n,) = struct.unpack("<Q", header)
        payload = fh.read()
    if len(payload) != n * 4:
        raise ValidationError(
            f"read_labels({path}): payload length {len(payload)} bytes, expected {n * 4}"
        )
    arr = np.frombuffer(payload, dtype="<i4").astype(np.int64)
    if count is not None and arr.shape[0] != count:
        raise ValidationError(f"read_labels({path}): expected {count} labels, got {arr.shape[0]}")
    return arr
