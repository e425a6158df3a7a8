import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sapa.errors import ConfigError, FormatError
from sapa.tensor import (
    Tensor,
    decode_tensor,
    get,
    project_location,
    read_tensor,
    window_offsets,
    window_vector,
    write_tensor,
)


def test_get_single_element():
    assert get(Tensor.from_flat(1, 1, 1, [7.0]), 0, 0, 0) == 7.0


def test_get_row_major():
    assert get(Tensor.from_flat(2, 2, 1, [1, 2, 3, 4]), 1, 0, 0) == 3.0
    assert get(Tensor.from_flat(1, 2, 2, [1, 2, 3, 4]), 0, 1, 1) == 4.0


@pytest.mark.parametrize("idx", [(2, 0, 0), (0, -1, 0), (0, 0, 1)])
def test_get_out_of_range(idx):
    with pytest.raises(IndexError):
        get(Tensor.from_flat(2, 2, 1, [1, 2, 3, 4]), *idx)


def test_tensor_is_read_only():
    t = Tensor(np.zeros((2, 2, 1)))
    with pytest.raises(ValueError):
        t.array[0, 0, 0] = 1.0
    assert t.data.size == 4


def test_tensor_rejects_bad_shapes():
    with pytest.raises(ConfigError):
        Tensor(np.zeros((2, 2)))
    with pytest.raises(ConfigError):
        Tensor(np.zeros((0, 2, 1)))
    with pytest.raises(ConfigError):
        Tensor.from_flat(2, 2, 2, [1, 2, 3])


def test_window_vector():
    t = Tensor.from_flat(3, 3, 1, np.arange(1, 10))
    np.testing.assert_array_equal(window_vector(t, (1, 1), (0, 0)), [5])
    np.testing.assert_array_equal(window_vector(t, (1, 1), (1, 1)), [9])
    np.testing.assert_array_equal(window_vector(t, (0, 0), (-1, -1)), window_vector(t, (0, 0), (0, 0)))
    with pytest.raises(IndexError):
        window_vector(t, (3, 0), (0, 0))


def test_window_vector_matches_get_in_interior(rng):
    t = Tensor(rng.standard_normal((7, 7, 3)))
    for u, v in window_offsets(5):
        vec = window_vector(t, (3, 3), (u, v))
        assert [get(t, 3 + u, 3 + v, c) for c in range(3)] == list(vec)


def test_window_offsets_count():
    for k in (1, 3, 5, 7):
        assert len(list(window_offsets(k))) == k * k


def test_project_location():
    assert project_location((5, 7), 2) == (2, 3)
    assert project_location((0, 0), 3) == (0, 0)
    assert project_location((9, 4), 3) == (3, 1)
    with pytest.raises(ConfigError):
        project_location((1, 1), 0)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 4))
def test_projected_locations_stay_in_bounds(h, w, r):
    for i in range(r * h):
        for j in range(r * w):
            pi, pj = project_location((i, j), r)
            assert 0 <= pi < h and 0 <= pj < w


finite_f32 = st.floats(width=32, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3)),
              elements=finite_f32))
def test_round_trip_bit_exact(tmp_path_factory, arr):
    path = tmp_path_factory.mktemp("io") / "t.sapt"
    write_tensor(Tensor(arr), path)
    back = read_tensor(path)
    assert back.shape == arr.shape
    assert back.array.tobytes() == arr.tobytes()


def test_negative_zero_survives(tmp_path):
    arr = np.array([[[-0.0, 0.0]]], dtype=np.float32)
    write_tensor(Tensor(arr), tmp_path / "z.sapt")
    back = read_tensor(tmp_path / "z.sapt").array
    assert np.signbit(back[0, 0, 0]) and not np.signbit(back[0, 0, 1])


def test_header_layout(tmp_path):
    write_tensor(Tensor(np.ones((2, 3, 4))), tmp_path / "t.sapt")
    blob = (tmp_path / "t.sapt").read_bytes()
    assert blob[:4] == b"SAPT"
    assert struct.unpack("<IIII", blob[4:20]) == (1, 2, 3, 4)
    assert len(blob) == 20 + 4 * 24


def test_bad_magic():
    with pytest.raises(FormatError) as exc:
        decode_tensor(b"NOPE" + bytes(16))
    assert exc.value.offset == 0


def test_truncated_payload():
    blob = b"SAPT" + struct.pack("<IIII", 1, 2, 2, 1) + bytes(8)
    with pytest.raises(FormatError, match="truncated") as exc:
        decode_tensor(blob)
    assert exc.value.offset == len(blob)


def test_truncated_header_and_bad_version():
    with pytest.raises(FormatError):
        decode_tensor(b"SAPT" + bytes(4))
    with pytest.raises(FormatError, match="version"):
        decode_tensor(b"SAPT" + struct.pack("<IIII", 2, 1, 1, 1) + bytes(4))


def test_dimension_overflow_and_zero():
    with pytest.raises(FormatError, match="overflow"):
        decode_tensor(b"SAPT" + struct.pack("<IIII", 1, 2**32 - 1, 2**32 - 1, 2**32 - 1))
    with pytest.raises(FormatError, match="zero"):
        decode_tensor(b"SAPT" + struct.pack("<IIII", 1, 0, 1, 1))
