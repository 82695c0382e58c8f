"""Tensor and positives file round trips, format arithmetic, validation."""

import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uqret.tensor_io import (
    _HEADER,
    BadMagicError,
    BadVersionError,
    DuplicatePositiveError,
    EmbeddingTensor,
    EmptyPositivesError,
    NonFiniteValueError,
    PositiveIndexError,
    PositivesMap,
    PositivesParseError,
    SizeMismatchError,
    TensorFormatError,
    UnsupportedDtypeError,
    parse_tensor,
    read_positives,
    read_tensor,
    write_positives,
    write_tensor,
)

HEADER_BYTES = 32  # 4 magic + 2 version + 1 dtype + 1 ndim + 3*8 dims


def f32_stack(rng, l, n, d):
    """Random stack whose float64 values are exactly float32-representable,
    so write->read is an identity."""
    return rng.standard_normal((l, n, d)).astype("<f4").astype(np.float64)


class TestTensorFiles:
    def test_smallest_tensor_file_size(self, tmp_path):
        path = tmp_path / "t.uqet"
        write_tensor(path, EmbeddingTensor(np.zeros((1, 1, 1))))
        assert path.stat().st_size == HEADER_BYTES + 4

    def test_payload_size_arithmetic(self, tmp_path):
        path = tmp_path / "t.uqet"
        write_tensor(path, EmbeddingTensor(np.zeros((2, 3, 4))))
        assert path.stat().st_size - HEADER_BYTES == 2 * 3 * 4 * 4 == 96

    def test_round_trip_random_stack(self, tmp_path):
        rng = np.random.default_rng(42)
        tensor = EmbeddingTensor(f32_stack(rng, 5, 10, 8))
        path = tmp_path / "t.uqet"
        write_tensor(path, tensor)
        loaded = read_tensor(path)
        np.testing.assert_array_equal(loaded.values, tensor.values)

    def test_write_read_write_is_byte_identity(self, tmp_path):
        rng = np.random.default_rng(7)
        first = tmp_path / "a.uqet"
        second = tmp_path / "b.uqet"
        write_tensor(first, EmbeddingTensor(f32_stack(rng, 3, 4, 5)))
        write_tensor(second, read_tensor(first))
        assert first.read_bytes() == second.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "t.uqet"
        write_tensor(path, EmbeddingTensor(np.zeros((1, 2, 3))))
        blob = bytearray(path.read_bytes())
        blob[:4] = b"XXXX"
        path.write_bytes(bytes(blob))
        with pytest.raises(BadMagicError):
            read_tensor(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "t.uqet"
        write_tensor(path, EmbeddingTensor(np.zeros((1, 2, 3))))
        blob = bytearray(path.read_bytes())
        blob[4:6] = struct.pack("<H", 9)
        path.write_bytes(bytes(blob))
        with pytest.raises(BadVersionError):
            read_tensor(path)

    def test_bad_dtype(self, tmp_path):
        path = tmp_path / "t.uqet"
        write_tensor(path, EmbeddingTensor(np.zeros((1, 2, 3))))
        blob = bytearray(path.read_bytes())
        blob[6] = 2
        path.write_bytes(bytes(blob))
        with pytest.raises(UnsupportedDtypeError):
            read_tensor(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "t.uqet"
        write_tensor(path, EmbeddingTensor(np.ones((2, 2, 2))))
        blob = path.read_bytes()
        path.write_bytes(blob[:-4])
        with pytest.raises(SizeMismatchError):
            read_tensor(path)

    def test_oversized_payload(self, tmp_path):
        path = tmp_path / "t.uqet"
        write_tensor(path, EmbeddingTensor(np.ones((2, 2, 2))))
        path.write_bytes(path.read_bytes() + b"\x00" * 4)
        with pytest.raises(SizeMismatchError):
            read_tensor(path)

    def test_non_finite_payload(self, tmp_path):
        path = tmp_path / "t.uqet"
        write_tensor(path, EmbeddingTensor(np.ones((1, 1, 2))))
        blob = bytearray(path.read_bytes())
        blob[HEADER_BYTES : HEADER_BYTES + 4] = struct.pack("<f", float("nan"))
        path.write_bytes(bytes(blob))
        with pytest.raises(NonFiniteValueError):
            read_tensor(path)

    def test_zero_dimension_rejected(self):
        header = _HEADER.pack(b"UQET", 1, 1, 3, 0, 1, 1)
        with pytest.raises(SizeMismatchError):
            parse_tensor(header)

    def test_constructor_rejects_non_finite(self):
        with pytest.raises(NonFiniteValueError):
            EmbeddingTensor(np.array([[[1.0, np.inf]]]))

    def test_constructor_rejects_wrong_rank(self):
        with pytest.raises(SizeMismatchError):
            EmbeddingTensor(np.zeros((2, 2)))

    def test_loaded_tensor_is_immutable(self, tmp_path):
        path = tmp_path / "t.uqet"
        write_tensor(path, EmbeddingTensor(np.ones((1, 1, 1))))
        loaded = read_tensor(path)
        with pytest.raises(ValueError):
            loaded.values[0, 0, 0] = 2.0


class TestValidationTotality:
    @given(blob=st.binary(max_size=256))
    @settings(max_examples=300, deadline=None)
    def test_arbitrary_bytes_parse_or_raise_typed(self, blob):
        try:
            tensor = parse_tensor(blob)
        except TensorFormatError:
            return
        assert tensor.values.ndim == 3
        assert np.all(np.isfinite(tensor.values))

    @given(
        dims=st.tuples(
            st.integers(1, 3), st.integers(1, 4), st.integers(1, 4)
        ),
        corrupt_at=st.integers(0, 31),
        replacement=st.integers(0, 255),
    )
    @settings(max_examples=200, deadline=None)
    def test_corrupted_header_parse_or_raise_typed(
        self, dims, corrupt_at, replacement
    ):
        values = np.zeros(dims)
        header = _HEADER.pack(b"UQET", 1, 1, 3, *dims)
        blob = bytearray(header + values.astype("<f4").tobytes())
        blob[corrupt_at] = replacement
        try:
            tensor = parse_tensor(bytes(blob))
        except TensorFormatError:
            return
        assert tensor.values.ndim == 3


class TestPositives:
    def write(self, tmp_path, obj):
        path = tmp_path / "pos.json"
        path.write_text(json.dumps(obj), encoding="utf-8")
        return path

    def test_two_query_map(self, tmp_path):
        path = self.write(
            tmp_path,
            {"direction": "a->b", "num_targets": 2, "positives": [[0], [1]]},
        )
        pos = read_positives(path)
        assert pos.num_queries == 2
        assert pos.positives == ((0,), (1,))

    def test_index_out_of_range(self, tmp_path):
        path = self.write(
            tmp_path,
            {"direction": "a->b", "num_targets": 5, "positives": [[7]]},
        )
        with pytest.raises(PositiveIndexError):
            read_positives(path)

    def test_empty_positive_list(self, tmp_path):
        path = self.write(
            tmp_path,
            {
                "direction": "a->b",
                "num_targets": 4,
                "positives": [[0], [1], [2], []],
            },
        )
        with pytest.raises(EmptyPositivesError):
            read_positives(path)

    def test_duplicate_positive(self, tmp_path):
        path = self.write(
            tmp_path,
            {"direction": "a->b", "num_targets": 3, "positives": [[1, 1]]},
        )
        with pytest.raises(DuplicatePositiveError):
            read_positives(path)

    def test_not_json(self, tmp_path):
        path = tmp_path / "pos.json"
        path.write_text("not json at all {", encoding="utf-8")
        with pytest.raises(PositivesParseError):
            read_positives(path)

    def test_missing_key(self, tmp_path):
        path = self.write(tmp_path, {"direction": "a->b", "positives": [[0]]})
        with pytest.raises(PositivesParseError):
            read_positives(path)

    def test_non_integer_index(self, tmp_path):
        path = self.write(
            tmp_path,
            {"direction": "a->b", "num_targets": 2, "positives": [[0.5]]},
        )
        with pytest.raises(PositivesParseError):
            read_positives(path)

    def test_round_trip(self, tmp_path):
        pos = PositivesMap(
            direction="b->a", num_targets=6, positives=((0, 3), (5,), (2, 1))
        )
        path = tmp_path / "pos.json"
        write_positives(path, pos)
        assert read_positives(path) == pos

    def test_multiple_positives_per_query_supported(self):
        pos = PositivesMap(
            direction="a->b",
            num_targets=10,
            positives=tuple((i, i + 5) for i in range(5)),
        )
        assert all(len(entry) == 2 for entry in pos.positives)
