"""Binary PGM (P5) export of single-channel maps."""
import re

import numpy as np

_HEADER = re.compile(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s")


def to_gray(values) -> np.ndarray:
    """Min-max scale to 0..255; a constant map becomes mid-gray 128."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.full(v.shape, 128, dtype=np.uint8)
    return np.rint((v - lo) / (hi - lo) * 255.0).astype(np.uint8)


def write_pgm(values, path) -> None:
    img = to_gray(values)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    m = _HEADER.match(blob)
    if m is None:
        raise ValueError("not a binary PGM")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ValueError("only 8-bit PGM is supported")
    return np.frombuffer(blob, dtype=np.uint8, count=w * h, offset=m.end()).reshape(h, w)
