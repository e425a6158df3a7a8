"""Similarity-aware kernel generation and the h(x) normalizer family."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend, _fallback
from .config import NormKind, UpsamplerConfig
from .errors import ConfigError, NumericError
from .similarity import SapaParams, embed
from .tensor import Tensor, as_array

DENOM_EPS = _fallback.DENOM_EPS


@dataclass(frozen=True)
class KernelField:
    """Dense kernels in output-point-major order, shape ``(rH, rW, K*K)``.

    The K*K axis enumerates window offsets (u, v) row-major, u and v running
    from -K//2 to K//2.
    """

    weights: np.ndarray
    k: int

    def __post_init__(self):
        if self.weights.ndim != 3 or self.weights.shape[2] != self.k * self.k:
            raise ConfigError(
                f"kernel weights must be (H, W, {self.k * self.k}), got {self.weights.shape}"
            )

    @property
    def out_height(self) -> int:
        return self.weights.shape[0]

    @property
    def out_width(self) -> int:
        return self.weights.shape[1]

    def offset_index(self, u: int, v: int) -> int:
        r = self.k // 2
        if not (-r <= u <= r and -r <= v <= r):
            raise ConfigError(f"offset ({u}, {v}) outside the {self.k}x{self.k} window")
        return (u + r) * self.k + (v + r)

    def offset_map(self, u: int, v: int) -> np.ndarray:
        """Weight at window offset (u, v) for every output point."""
        return self.weights[:, :, self.offset_index(u, v)]

    def to_tensor(self) -> Tensor:
        return Tensor(self.weights)

    @classmethod
    def from_tensor(cls, t: Tensor) -> "KernelField":
        k = int(round(np.sqrt(t.channels)))
        if k * k != t.channels or k % 2 == 0:
            raise ConfigError(f"{t.channels} channels is not an odd square kernel size")
        return cls(t.array, k)


def normalize_window(scores, kind=NormKind.EXP) -> np.ndarray:
    """Turn one window of scores (or a stack, last axis) into kernel weights.

    Non-exp normalizers divide by ``sum + 1e-8``; a relu window whose scores
    are all non-positive becomes uniform.
    """
    kind = NormKind.parse(kind)
    s = np.asarray(scores)
    if not np.issubdtype(s.dtype, np.floating):
        s = s.astype(np.float64)
    if np.isnan(s).any():
        raise NumericError("NaN in similarity scores")
    return _fallback.normalize(s, kind.code)


def _check_shapes(enc, dec, ratio):
    h, w, _ = dec.shape
    if enc.shape[:2] != (ratio * h, ratio * w):
        raise ConfigError(
            f"encoder is {enc.shape[0]}x{enc.shape[1]} but ratio {ratio} on a {h}x{w} "
            f"decoder expects ({ratio * h}, {ratio * w})"
        )


def _prepare(encoder, decoder):
    enc, dec = as_array(encoder), as_array(decoder)
    if enc.ndim != 3 or dec.ndim != 3:
        raise ConfigError("encoder and decoder must be (H, W, C)")
    dtype = np.result_type(enc.dtype, dec.dtype, np.float32)
    enc, dec = enc.astype(dtype, copy=False), dec.astype(dtype, copy=False)
    if not (np.isfinite(enc).all() and np.isfinite(dec).all()):
        raise NumericError("non-finite values in encoder or decoder")
    return enc, dec


def generate_kernels(encoder, decoder, params: SapaParams | None, config: UpsamplerConfig,
                     threads: int = 1, backend: str | None = None, counter=None) -> KernelField:
    """Score every decoder window point against the co-located encoder point.

    For output point l' the window is centered at l' // ratio in the decoder
    (clamped at the borders) and the encoder vector at l' is the query.
    """
    enc, dec = _prepare(encoder, decoder)
    _check_shapes(enc, dec, config.ratio)
    emb = embed(enc, dec, params, config.similarity, config.ratio, counter=counter)
    weights = _backend.generate(
        emb.keys, emb.queries, config.ratio, config.kernel_size, config.norm.code,
        threads=threads, backend=backend, counter=counter,
    )
    return KernelField(weights, config.kernel_size)
