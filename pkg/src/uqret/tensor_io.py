"""Embedding-stack files and ground-truth positives.

Binary tensor layout (little-endian throughout):

    magic    4 bytes   b"UQET"
    version  u16       1
    dtype    u8        1 (float32)
    ndim     u8        3
    dims     3 x u64   (L, N, D): model draws, samples, embedding dim
    payload  L*N*D x f32, row-major with D fastest

Values are stored as float32 on disk and widened to float64 in memory so
that all downstream arithmetic (softmax, entropies, variances) runs in
double precision.

Positives are a JSON object::

    {"direction": "a->b", "num_targets": 200, "positives": [[0], [1], ...]}

with one list of target indices per query.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputValidationError

MAGIC = b"UQET"
VERSION = 1
DTYPE_FLOAT32 = 1
_HEADER = struct.Struct("<4sHBB3Q")


class TensorFormatError(InputValidationError):
    """Base for malformed tensor files or invalid stacks."""


class BadMagicError(TensorFormatError):
    pass


class BadVersionError(TensorFormatError):
    pass


class UnsupportedDtypeError(TensorFormatError):
    pass


class SizeMismatchError(TensorFormatError):
    """Header, dims, and payload length do not agree."""


class NonFiniteValueError(TensorFormatError):
    """Stack contains NaN or Inf; downstream math would be poisoned."""


class PositivesError(InputValidationError):
    """Base for malformed positives maps."""


class PositivesParseError(PositivesError):
    pass


class PositiveIndexError(PositivesError):
    pass


class EmptyPositivesError(PositivesError):
    pass


class DuplicatePositiveError(PositivesError):
    pass


@dataclass(frozen=True)
class EmbeddingTensor:
    """Stack of L stochastic embedding draws, one (N, D) slice per model.

    The array is validated and frozen at construction: shape (L, N, D)
    with every dimension >= 1 and every value finite.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 3:
            raise SizeMismatchError(
                f"expected an (L, N, D) stack, got shape {arr.shape}"
            )
        if min(arr.shape) < 1:
            raise SizeMismatchError(f"every dimension must be >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValueError("embedding stack contains NaN or Inf")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def num_models(self) -> int:
        return self.values.shape[0]

    @property
    def num_samples(self) -> int:
        return self.values.shape[1]

    @property
    def dim(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class PositivesMap:
    """Per-query positive target indices for one retrieval direction.

    Supports several positives per query (e.g. one image paired with five
    captions), so entries are index lists rather than single indices.
    """

    direction: str
    num_targets: int
    positives: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if not isinstance(self.num_targets, int) or self.num_targets < 1:
            raise PositivesParseError(
                f"num_targets must be a positive integer, got {self.num_targets!r}"
            )
        normalized = []
        for q, entry in enumerate(self.positives):
            targets = tuple(entry)
            if len(targets) == 0:
                raise EmptyPositivesError(f"query {q} has no positive targets")
            for t in targets:
                if not isinstance(t, (int, np.integer)) or isinstance(t, bool):
                    raise PositivesParseError(
                        f"query {q}: target index {t!r} is not an integer"
                    )
                if not 0 <= t < self.num_targets:
                    raise PositiveIndexError(
                        f"query {q}: target index {t} out of range "
                        f"[0, {self.num_targets})"
                    )
            if len(set(targets)) != len(targets):
                raise DuplicatePositiveError(f"query {q} lists a target twice")
            normalized.append(tuple(int(t) for t in targets))
        object.__setattr__(self, "positives", tuple(normalized))

    @property
    def num_queries(self) -> int:
        return len(self.positives)


FLOAT32_MAX = float(np.finfo(np.float32).max)


def write_tensor(path, tensor: EmbeddingTensor) -> None:
    """Serialize a stack; the float64 values are narrowed to float32."""
    if np.any(np.abs(tensor.values) > FLOAT32_MAX):
        raise NonFiniteValueError(
            "values exceed float32 range and would be stored as Inf"
        )
    l, n, d = tensor.values.shape
    header = _HEADER.pack(MAGIC, VERSION, DTYPE_FLOAT32, 3, l, n, d)
    payload = tensor.values.astype("<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_tensor(path) -> EmbeddingTensor:
    """Parse and validate a stack file; any defect raises a typed error."""
    return parse_tensor(Path(path).read_bytes())


def parse_tensor(blob: bytes) -> EmbeddingTensor:
    """Total validation: every byte string either yields a valid tensor
    or raises a :class:`TensorFormatError` subclass, never a partially
    constructed tensor."""
    if len(blob) < _HEADER.size:
        raise SizeMismatchError(
            f"file is {len(blob)} bytes, shorter than the {_HEADER.size}-byte header"
        )
    magic, version, dtype, ndim, l, n, d = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise BadVersionError(f"unsupported version {version}, expected {VERSION}")
    if dtype != DTYPE_FLOAT32:
        raise UnsupportedDtypeError(f"unsupported dtype code {dtype}")
    if ndim != 3:
        raise SizeMismatchError(f"ndim must be 3, got {ndim}")
    if min(l, n, d) < 1:
        raise SizeMismatchError(f"every dimension must be >= 1, got {(l, n, d)}")
    expected = l * n * d * 4
    actual = len(blob) - _HEADER.size
    if actual != expected:
        raise SizeMismatchError(
            f"payload is {actual} bytes, dims {(l, n, d)} require {expected}"
        )
    values = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(l, n, d)
    if not np.all(np.isfinite(values)):
        raise NonFiniteValueError("payload contains NaN or Inf")
    return EmbeddingTensor(values)


def read_positives(path) -> PositivesMap:
    """Parse and validate a positives JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            obj = json.load(f)
    except json.JSONDecodeError as exc:
        raise PositivesParseError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise PositivesParseError(f"{path}: top level must be a JSON object")
    for key in ("direction", "num_targets", "positives"):
        if key not in obj:
            raise PositivesParseError(f"{path}: missing key {key!r}")
    direction = obj["direction"]
    num_targets = obj["num_targets"]
    raw = obj["positives"]
    if not isinstance(direction, str):
        raise PositivesParseError(f"{path}: direction must be a string")
    if not isinstance(num_targets, int) or isinstance(num_targets, bool):
        raise PositivesParseError(f"{path}: num_targets must be an integer")
    if not isinstance(raw, list) or not all(isinstance(e, list) for e in raw):
        raise PositivesParseError(f"{path}: positives must be a list of lists")
    for q, entry in enumerate(raw):
        for t in entry:
            if not isinstance(t, int) or isinstance(t, bool):
                raise PositivesParseError(
                    f"{path}: query {q}: index {t!r} is not an integer"
                )
    return PositivesMap(
        direction=direction,
        num_targets=num_targets,
        positives=tuple(tuple(e) for e in raw),
    )


def write_positives(path, positives: PositivesMap) -> None:
    obj = {
        "direction": positives.direction,
        "num_targets": positives.num_targets,
        "positives": [list(e) for e in positives.positives],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, separators=(",", ":"))
        f.write("\n")
