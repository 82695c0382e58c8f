"""Standalone writers for the UQET stack format and the positives JSON.

The layout matches the consuming toolkit bit for bit (little-endian):

    magic "UQET" | version u16=1 | dtype u8=1 (f32) | ndim u8=3 |
    dims 3 x u64 (L, N, D) | payload L*N*D f32, row-major, D fastest

Slices are streamed in order, batch by batch, so arbitrarily many rows
never need to sit in memory at once.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"UQET"
VERSION = 1
DTYPE_FLOAT32 = 1
_HEADER = struct.Struct("<4sHBB3Q")
_FLOAT32_MAX = float(np.finfo(np.float32).max)


class ExportError(Exception):
    """Base class for exporter failures."""


class ShapeDriftError(ExportError):
    """A batch produced embeddings of an unexpected shape."""


class StreamingTensorWriter:
    """Writes one (num_models, num_rows, dim) float32 stack.

    Rows must arrive slice by slice in a fixed order; the writer tracks
    progress and refuses to close before exactly num_models * num_rows
    rows were written.
    """

    def __init__(self, path, num_models: int, num_rows: int, dim: int):
        if min(num_models, num_rows, dim) < 1:
            raise ExportError(
                f"all dims must be >= 1, got {(num_models, num_rows, dim)}"
            )
        self._dims = (num_models, num_rows, dim)
        self._rows_written = 0
        self._file = open(path, "wb")
        self._file.write(
            _HEADER.pack(MAGIC, VERSION, DTYPE_FLOAT32, 3, num_models,
                         num_rows, dim)
        )

    @property
    def expected_rows(self) -> int:
        return self._dims[0] * self._dims[1]

    def write_rows(self, rows) -> None:
        arr = np.asarray(rows, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != self._dims[2]:
            raise ShapeDriftError(
                f"batch shape {arr.shape} does not match embedding dim "
                f"{self._dims[2]}"
            )
        if not np.all(np.isfinite(arr)):
            raise ExportError("embeddings contain NaN or Inf")
        if np.any(np.abs(arr) > _FLOAT32_MAX):
            raise ExportError("embeddings exceed float32 range")
        if self._rows_written + arr.shape[0] > self.expected_rows:
            raise ShapeDriftError("more rows than the declared dims allow")
        self._file.write(arr.astype("<f4").tobytes())
        self._rows_written += arr.shape[0]

    def close(self) -> None:
        try:
            if self._rows_written != self.expected_rows:
                raise ShapeDriftError(
                    f"wrote {self._rows_written} rows, dims require "
                    f"{self.expected_rows}"
                )
        finally:
            self._file.close()

    def abort(self) -> None:
        self._file.close()


def write_positives(path, direction: str, num_targets: int, positives) -> None:
    """Positives JSON in the consuming toolkit's schema."""
    entries = [list(int(t) for t in entry) for entry in positives]
    for q, entry in enumerate(entries):
        if not entry:
            raise ExportError(f"query {q} has no positives")
        if any(not 0 <= t < num_targets for t in entry):
            raise ExportError(f"query {q} has an out-of-range target index")
    obj = {
        "direction": direction,
        "num_targets": int(num_targets),
        "positives": entries,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, separators=(",", ":"))
        f.write("\n")
