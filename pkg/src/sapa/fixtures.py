"""Synthetic inputs with known cluster structure."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


def two_cluster(height, width, channels, seed=0, ratio=2, noise=0.01, dtype=np.float32):
    """Decoder split on a vertical seam into constant vectors ``a | b``.

    Columns ``< width // 2`` hold ``a``, the rest ``b``. The encoder repeats
    the split at ``ratio`` times the resolution (seam at column
    ``ratio * (width // 2)``) with small Gaussian noise added.
    Returns ``(encoder, decoder, a, b)``.
    """
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(channels)
    b = rng.standard_normal(channels)
    while np.allclose(a, b):
        b = rng.standard_normal(channels)
    seam = width // 2
    dec = np.empty((height, width, channels))
    dec[:, :seam] = a
    dec[:, seam:] = b
    enc = np.empty((ratio * height, ratio * width, channels))
    enc[:, : ratio * seam] = a
    enc[:, ratio * seam:] = b
    enc += noise * rng.standard_normal(enc.shape)
    return Tensor(enc, dtype=dtype), Tensor(dec, dtype=dtype), a.astype(dtype), b.astype(dtype)


def transition_width(values, a, b, tol=1e-3):
    """Columns whose value sits strictly inside (a, b), beyond ``tol`` of the contrast.

    ``values`` is an (H, W, C) map; per channel the value is mapped to
    t = (v - a) / (b - a) and a column counts when tol < t < 1 - tol for any
    row. The widest channel is reported.
    """
    v = np.asarray(values, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    span = b - a
    ok = np.abs(span) > 1e-12
    t = (v[..., ok] - a[ok]) / span[ok]
    inside = (t > tol) & (t < 1 - tol)  # (H, W, C')
    per_channel = inside.any(axis=0).sum(axis=0)
    return int(per_channel.max()) if per_channel.size else 0
