"""Feature assembly, the end-to-end SAPA forward pass and fixed baselines."""
from __future__ import annotations

import numpy as np

from . import _backend
from .config import NormKind, UpsamplerConfig
from .errors import ConfigError
from .kernels import KernelField, _check_shapes, _prepare, generate_kernels
from .similarity import SapaParams, SimilarityKind
from .tensor import Tensor, as_array

__all__ = [
    "NormKind",
    "SimilarityKind",
    "UpsamplerConfig",
    "assemble",
    "sapa_forward",
    "upsample_bilinear",
    "upsample_nearest",
]


def assemble(decoder, kernels: KernelField, ratio: int, threads: int = 1,
             backend: str | None = None, counter=None) -> Tensor:
    """Value each output point as the kernel-weighted sum of its decoder window."""
    dec = as_array(decoder)
    h, w, _ = dec.shape
    if (kernels.out_height, kernels.out_width) != (ratio * h, ratio * w):
        raise ConfigError(
            f"kernel field is {kernels.out_height}x{kernels.out_width}, expected "
            f"({ratio * h}, {ratio * w}) for ratio {ratio}"
        )
    out = _backend.assemble(dec, kernels.weights, ratio, kernels.k, threads=threads,
                            backend=backend, counter=counter)
    return Tensor(out)


def sapa_forward(encoder, decoder, params: SapaParams | None, config: UpsamplerConfig,
                 threads: int = 1, backend: str | None = None, counter=None):
    """Upsample ``decoder`` guided by ``encoder``; returns ``(output, kernels)``."""
    enc, dec = _prepare(encoder, decoder)
    _check_shapes(enc, dec, config.ratio)
    kernels = generate_kernels(enc, dec, params, config, threads=threads, backend=backend,
                               counter=counter)
    out = assemble(dec, kernels, config.ratio, threads=threads, backend=backend, counter=counter)
    return out, kernels


def upsample_nearest(t, ratio: int) -> Tensor:
    if ratio < 1:
        raise ConfigError(f"ratio must be >= 1, got {ratio}")
    a = as_array(t)
    return Tensor(np.repeat(np.repeat(a, ratio, axis=0), ratio, axis=1))


def _bilinear_axis(n_in, ratio, align_corners):
    n_out = n_in * ratio
    dst = np.arange(n_out, dtype=np.float64)
    if align_corners:
        src = dst * ((n_in - 1) / (n_out - 1)) if n_out > 1 else np.zeros_like(dst)
    else:
        src = np.maximum((dst + 0.5) / ratio - 0.5, 0.0)
    i0 = np.minimum(np.floor(src).astype(np.int64), n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def upsample_bilinear(t, ratio: int, align_corners: bool = False) -> Tensor:
    """Separable bilinear resize; half-pixel centers unless ``align_corners``."""
    if ratio < 1:
        raise ConfigError(f"ratio must be >= 1, got {ratio}")
    a = as_array(t)
    h, w, _ = a.shape
    r0, r1, fr = _bilinear_axis(h, ratio, align_corners)
    c0, c1, fc = _bilinear_axis(w, ratio, align_corners)
    fr = fr.astype(a.dtype)[:, None, None]
    fc = fc.astype(a.dtype)[None, :, None]
    rows = a[r0] * (1 - fr) + a[r1] * fr
    return Tensor(rows[:, c0] * (1 - fc) + rows[:, c1] * fc)
