"""Dense HWC feature maps, window access and the SAPT file format.

A :class:`Tensor` is a read-only ``(height, width, channels)`` array stored
row-major, so the channel vector of every spatial point is contiguous.
"""
from __future__ import annotations

import os
import struct
from typing import Iterator, Tuple

import numpy as np

from .errors import ConfigError, FormatError

MAGIC = b"SAPT"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")
# one f32 payload must stay addressable on 64-bit hosts
_MAX_ELEMENTS = 2**40

DTYPES = {"f32": np.float32, "f64": np.float64}


class Tensor:
    """Immutable rank-3 feature map of shape ``(H, W, C)``.

    The wrapped array is copied on construction and flagged read-only, so a
    tensor can be shared between threads without locking.
    """

    __slots__ = ("_array",)

    def __init__(self, array, dtype=None):
        arr = np.array(array, dtype=dtype, copy=True, order="C")
        if not np.issubdtype(arr.dtype, np.floating) or arr.dtype == np.float16:
            arr = arr.astype(np.float32)
        if arr.ndim != 3:
            raise ConfigError(f"tensor must be rank 3 (H, W, C), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ConfigError(f"tensor dimensions must be positive, got {arr.shape}")
        arr.setflags(write=False)
        self._array = arr

    @classmethod
    def from_flat(cls, height, width, channels, data, dtype=np.float32) -> "Tensor":
        flat = np.asarray(data, dtype=dtype)
        if flat.size != height * width * channels:
            raise ConfigError(
                f"data length {flat.size} != {height}*{width}*{channels}"
            )
        return cls(flat.reshape(height, width, channels))

    @classmethod
    def full(cls, height, width, vector, dtype=np.float32) -> "Tensor":
        """Broadcast one channel vector to every spatial position."""
        vec = np.asarray(vector, dtype=dtype).reshape(1, 1, -1)
        return cls(np.broadcast_to(vec, (height, width, vec.shape[-1])))

    @property
    def array(self) -> np.ndarray:
        return self._array

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view (row, column, channel)."""
        return self._array.reshape(-1)

    @property
    def height(self) -> int:
        return self._array.shape[0]

    @property
    def width(self) -> int:
        return self._array.shape[1]

    @property
    def channels(self) -> int:
        return self._array.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self._array.shape

    @property
    def dtype(self):
        return self._array.dtype

    def astype(self, dtype) -> "Tensor":
        return Tensor(self._array, dtype=dtype)

    def __repr__(self):
        h, w, c = self.shape
        return f"Tensor({h}x{w}x{c}, {self.dtype})"


def as_array(t) -> np.ndarray:
    return t.array if isinstance(t, Tensor) else np.asarray(t)


def get(t: Tensor, row: int, col: int, ch: int) -> float:
    h, w, c = t.shape
    if not (0 <= row < h and 0 <= col < w and 0 <= ch < c):
        raise IndexError(f"index ({row}, {col}, {ch}) out of range for {h}x{w}x{c}")
    return float(t.data[(row * w + col) * c + ch])


def window_offsets(k: int) -> Iterator[Tuple[int, int]]:
    """Offsets (u, v) of a K x K window in row-major order."""
    r = k // 2
    for u in range(-r, r + 1):
        for v in range(-r, r + 1):
            yield u, v


def window_vector(t: Tensor, center, offset) -> np.ndarray:
    """Channel vector at ``center + offset`` with clamp-to-edge borders."""
    row, col = center
    h, w, _ = t.shape
    if not (0 <= row < h and 0 <= col < w):
        raise IndexError(f"center ({row}, {col}) out of range for {h}x{w}")
    u, v = offset
    rr = min(max(row + u, 0), h - 1)
    cc = min(max(col + v, 0), w - 1)
    return t.array[rr, cc]


def project_location(l_prime, ratio: int):
    """Decoder location that an output point at ``l_prime`` falls into."""
    if ratio < 1:
        raise ConfigError(f"ratio must be >= 1, got {ratio}")
    return l_prime[0] // ratio, l_prime[1] // ratio


def write_tensor(t, path) -> None:
    """Write ``t`` as SAPT v1. Values are stored as little-endian f32."""
    arr = as_array(t)
    if arr.ndim != 3:
        raise ConfigError(f"tensor must be rank 3, got shape {arr.shape}")
    h, w, c = arr.shape
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, h, w, c))
        fh.write(payload)


def read_tensor(path) -> Tensor:
    with open(path, "rb") as fh:
        blob = fh.read()
    return decode_tensor(blob)


def decode_tensor(blob: bytes) -> Tensor:
    if len(blob) < 4:
        raise FormatError("file shorter than magic", offset=len(blob))
    if blob[:4] != MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}", offset=0)
    if len(blob) < _HEADER.size:
        raise FormatError("truncated header", offset=len(blob))
    _, version, h, w, c = _HEADER.unpack_from(blob)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if h == 0 or w == 0 or c == 0:
        raise FormatError(f"zero dimension in header {h}x{w}x{c}", offset=8)
    count = h * w * c
    if count > _MAX_ELEMENTS:
        raise FormatError(f"dimension overflow: {h}*{w}*{c} elements", offset=8)
    need = _HEADER.size + 4 * count
    if len(blob) < need:
        raise FormatError(
            f"truncated payload: expected {need} bytes, got {len(blob)}", offset=len(blob)
        )
    if len(blob) > need:
        raise FormatError(f"{len(blob) - need} trailing bytes after payload", offset=need)
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=_HEADER.size)
    return Tensor(data.astype(np.float32).reshape(h, w, c))


def read_optional(path):
    return read_tensor(path) if os.path.exists(path) else None
