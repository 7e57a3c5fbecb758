"""Binary feature-file container shared by audio and visual features.

Layout (little-endian, documented in FORMATS.md):

    offset  size  field
    0       4     magic b"AVFT"
    4       2     format version (u16), currently 1
    6       1     kind (u8): 0 = audio spectrogram-like, 1 = visual
    7       1     dtype code (u8): 0 = float64
    8       4     rows (u32)
    12      4     cols (u32)
    16      8     frame period in seconds (f64); 0.0 when not meaningful
    24      ...   payload: rows*cols float64 values, row-major

The payload length must match the header exactly; truncated or oversized
files are rejected naming expected vs. actual byte counts.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from avasr.errors import DataError

MAGIC = b"AVFT"
VERSION = 1
KIND_AUDIO = 0
KIND_VISUAL = 1

_HEADER = struct.Struct("<4sHBBIId")


def write_features(path: str | Path, matrix: np.ndarray, kind: int,
                   frame_period: float = 0.0) -> None:
    """Write a 2-d float64 matrix to the container format."""
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise DataError(
            f"feature matrix must be 2-d, got shape {matrix.shape}")
    if kind not in (KIND_AUDIO, KIND_VISUAL):
        raise DataError(f"unknown feature kind {kind}")
    rows, cols = matrix.shape
    header = _HEADER.pack(MAGIC, VERSION, kind, 0, rows, cols,
                          float(frame_period))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(matrix.tobytes())


def read_features(path: str | Path,
                  expect_kind: int | None = None
                  ) -> tuple[np.ndarray, float]:
    """Read a feature file; returns (matrix, frame_period)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read feature file {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise DataError(
            f"{path}: header truncated, need {_HEADER.size} bytes, "
            f"got {len(raw)}")
    magic, version, kind, dtype_code, rows, cols, frame_period = \
        _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise DataError(f"{path}: unsupported format version {version}")
    if dtype_code != 0:
        raise DataError(f"{path}: unsupported dtype code {dtype_code}")
    if expect_kind is not None and kind != expect_kind:
        raise DataError(
            f"{path}: feature kind {kind}, expected {expect_kind}")
    expected = _HEADER.size + rows * cols * 8
    if len(raw) != expected:
        raise DataError(
            f"{path}: payload size mismatch, expected {expected} bytes "
            f"total, got {len(raw)}")
    matrix = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size,
                           count=rows * cols).reshape(rows, cols).copy()
    return matrix, frame_period
