"""LayerNorm, low-rank projections and the three similarity scorers.

The scalar functions (:func:`sim_inner`, :func:`sim_bilinear`,
:func:`sim_gated`) score one (decoder point, encoder point) pair and are
what the reference tests are written against. :func:`embed` computes the
same quantities for whole feature maps: every similarity reduces to a dot
product between a decoder *key* and an encoder *query*, which is what the
window kernels consume.
"""
from __future__ import annotations

import enum
import os
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError
from .tensor import read_tensor, write_tensor

LAYERNORM_EPS = 1e-5


class SimilarityKind(str, enum.Enum):
    INNER = "inner"
    BILINEAR = "bilinear"
    GATED = "gated"

    @classmethod
    def parse(cls, value) -> "SimilarityKind":
        try:
            return cls(value.lower() if isinstance(value, str) else value)
        except ValueError:
            raise ConfigError(f"unknown similarity kind {value!r}") from None


@dataclass(frozen=True)
class SapaParams:
    """Learnable state.

    ``p_x`` is d x C (decoder), ``p_y`` is d x C_enc (encoder). ``p_xx`` is
    only set for the expanded gated form, where the self-similarity branch
    gets its own projection instead of reusing ``p_x``.
    """

    p_x: np.ndarray
    p_y: np.ndarray
    gate_w: np.ndarray
    gate_b: float = 0.0
    p_xx: Optional[np.ndarray] = None
    layernorm_eps: float = LAYERNORM_EPS

    def __post_init__(self):
        if self.p_x.ndim != 2 or self.p_y.ndim != 2:
            raise ConfigError("projection matrices must be 2-D")
        if self.p_x.shape[0] != self.p_y.shape[0]:
            raise ConfigError(
                f"p_x and p_y embed to different dims: {self.p_x.shape} vs {self.p_y.shape}"
            )
        if self.gate_w.shape != (self.p_x.shape[1],):
            raise ConfigError(
                f"gate_w must have length {self.p_x.shape[1]}, got {self.gate_w.shape}"
            )
        if self.p_xx is not None and self.p_xx.shape != self.p_x.shape:
            raise ConfigError(f"p_xx must match p_x shape {self.p_x.shape}")

    @property
    def embed_dim(self) -> int:
        return self.p_x.shape[0]

    @property
    def channels(self) -> int:
        return self.p_x.shape[1]

    @property
    def self_projection(self) -> np.ndarray:
        return self.p_x if self.p_xx is None else self.p_xx

    def param_count(self, kind) -> int:
        kind = SimilarityKind.parse(kind)
        if kind is SimilarityKind.INNER:
            return 0
        n = self.p_x.size + self.p_y.size
        if kind is SimilarityKind.GATED:
            n += self.gate_w.size + 1
            if self.p_xx is not None:
                n += self.p_xx.size
        return n

    def astype(self, dtype) -> "SapaParams":
        cast = lambda a: None if a is None else np.asarray(a, dtype=dtype)  # noqa: E731
        return replace(
            self,
            p_x=cast(self.p_x),
            p_y=cast(self.p_y),
            gate_w=cast(self.gate_w),
            p_xx=cast(self.p_xx),
            gate_b=np.dtype(dtype).type(self.gate_b),
        )


def init_params(channels, embed_dim=32, seed=0, enc_channels=None, expanded=False,
                dtype=np.float64) -> SapaParams:
    """Seeded init: projections and gate weights uniform in +-1/sqrt(fan_in), zero bias."""
    enc_channels = channels if enc_channels is None else enc_channels
    if embed_dim > channels:
        warnings.warn(
            f"embed_dim {embed_dim} exceeds channels {channels}; projections are not low-rank",
            stacklevel=2,
        )
    rng = np.random.default_rng(seed)
    bx = 1.0 / np.sqrt(channels)
    by = 1.0 / np.sqrt(enc_channels)
    p_x = rng.uniform(-bx, bx, size=(embed_dim, channels))
    p_y = rng.uniform(-by, by, size=(embed_dim, enc_channels))
    gate_w = rng.uniform(-bx, bx, size=channels)
    p_xx = rng.uniform(-bx, bx, size=(embed_dim, channels)) if expanded else None
    return SapaParams(p_x, p_y, gate_w, 0.0, p_xx).astype(dtype)


def layer_norm(v, eps=LAYERNORM_EPS) -> np.ndarray:
    """Normalize over the last axis to zero mean and unit variance; no affine."""
    v = np.asarray(v)
    mu = v.mean(axis=-1, keepdims=True)
    var = np.square(v - mu).mean(axis=-1, keepdims=True)
    return (v - mu) / np.sqrt(var + eps)


def _check_len(a, b):
    if a.shape[-1] != b.shape[-1]:
        raise ConfigError(f"channel mismatch: {a.shape[-1]} vs {b.shape[-1]}")


def sim_inner(x, y) -> float:
    x, y = np.asarray(x), np.asarray(y)
    _check_len(x, y)
    return float(np.dot(x, y))


def sim_bilinear(x, y, params: SapaParams) -> float:
    x, y = np.asarray(x), np.asarray(y)
    if x.shape[-1] != params.p_x.shape[1] or y.shape[-1] != params.p_y.shape[1]:
        raise ConfigError(
            f"vector lengths ({x.shape[-1]}, {y.shape[-1]}) do not fit projections "
            f"{params.p_x.shape}, {params.p_y.shape}"
        )
    return float(np.dot(params.p_x @ x, params.p_y @ y))


def sigmoid(z):
    z = np.asarray(z)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def gate(x_ln, params: SapaParams) -> float:
    x_ln = np.asarray(x_ln)
    _check_len(x_ln, params.gate_w)
    return float(sigmoid(np.dot(params.gate_w, x_ln) + params.gate_b))


def sim_gated(x_center_ln, x_window_ln, y_ln, params: SapaParams, g=None) -> float:
    """Gated bilinear score; ``g`` overrides the learned gate when given."""
    x_center_ln = np.asarray(x_center_ln)
    x_window_ln = np.asarray(x_window_ln)
    y_ln = np.asarray(y_ln)
    _check_len(x_center_ln, params.p_x)
    _check_len(x_window_ln, params.p_x)
    _check_len(y_ln, params.p_y)
    if g is None:
        g = gate(x_center_ln, params)
    mixed = g * (params.p_y @ y_ln) + (1.0 - g) * (params.self_projection @ x_center_ln)
    return float(np.dot(params.p_x @ x_window_ln, mixed))


@dataclass
class Embedding:
    """Per-map keys and queries; the window score is ``keys[l+p] . queries[l']``."""

    keys: np.ndarray  # (H, W, D)
    queries: np.ndarray  # (rH, rW, D)
    dec_ln: np.ndarray
    enc_ln: np.ndarray
    enc_embed: Optional[np.ndarray] = None  # P_y y, gated only
    self_embed: Optional[np.ndarray] = None  # P_xx x, gated only
    gate: Optional[np.ndarray] = field(default=None)  # (H, W)


def nearest_broadcast(a: np.ndarray, ratio: int) -> np.ndarray:
    return np.repeat(np.repeat(a, ratio, axis=0), ratio, axis=1)


def embed(enc: np.ndarray, dec: np.ndarray, params: Optional[SapaParams], kind, ratio: int,
          counter=None) -> Embedding:
    """LayerNorm both maps and build keys/queries for ``kind``.

    ``counter`` (optional callable) receives ``(multiply_adds, stage)`` for
    each projection and mixing step as it executes.
    """
    kind = SimilarityKind.parse(kind)
    eps = LAYERNORM_EPS if params is None else params.layernorm_eps
    dtype = dec.dtype
    xn = layer_norm(dec, eps).astype(dtype, copy=False)
    yn = layer_norm(enc, eps).astype(dtype, copy=False)
    h, w, c = dec.shape
    if kind is SimilarityKind.INNER:
        if enc.shape[2] != c:
            raise ConfigError(
                f"inner similarity needs equal channels, got encoder {enc.shape[2]} vs decoder {c}"
            )
        return Embedding(xn, yn, xn, yn)
    if params is None:
        raise ConfigError(f"{kind.value} similarity needs parameters")
    if params.p_x.shape[1] != c or params.p_y.shape[1] != enc.shape[2]:
        raise ConfigError(
            f"params expect decoder/encoder channels {params.p_x.shape[1]}/{params.p_y.shape[1]}, "
            f"got {c}/{enc.shape[2]}"
        )
    p = params.astype(dtype)
    d = p.embed_dim
    keys = xn @ p.p_x.T
    e = yn @ p.p_y.T
    if counter is not None:
        counter(xn[..., 0].size * c * d, "embedding")
        counter(yn[..., 0].size * enc.shape[2] * d, "embedding")
    if kind is SimilarityKind.BILINEAR:
        return Embedding(keys, e, xn, yn)
    g = sigmoid(xn @ p.gate_w + p.gate_b).astype(dtype)
    if counter is not None:
        counter(h * w * c, "gating")
    s = keys if p.p_xx is None else xn @ p.p_xx.T
    if counter is not None and p.p_xx is not None:
        counter(h * w * c * d, "embedding")
    gb = nearest_broadcast(g, ratio)[..., None]
    q = gb * e + (1.0 - gb) * nearest_broadcast(s, ratio)
    if counter is not None:
        counter(2 * q.size, "gating")
    return Embedding(keys, q.astype(dtype, copy=False), xn, yn, e, s, g)


PARAM_FILES = ("p_x.sapt", "p_y.sapt", "gate.sapt", "p_xx.sapt")


def save_params(params: SapaParams, directory) -> None:
    """Write a params bundle.

    Matrices are stored transposed (C rows, d columns, one channel); the
    gate file holds C weights followed by the bias as a (C+1) x 1 x 1 tensor.
    """
    os.makedirs(directory, exist_ok=True)
    write_tensor(params.p_x.T[:, :, None], os.path.join(directory, "p_x.sapt"))
    write_tensor(params.p_y.T[:, :, None], os.path.join(directory, "p_y.sapt"))
    gate_vec = np.append(params.gate_w, params.gate_b)
    write_tensor(gate_vec[:, None, None], os.path.join(directory, "gate.sapt"))
    if params.p_xx is not None:
        write_tensor(params.p_xx.T[:, :, None], os.path.join(directory, "p_xx.sapt"))


def load_params(directory, dtype=np.float64) -> SapaParams:
    def mat(name):
        t = read_tensor(os.path.join(directory, name))
        if t.channels != 1:
            raise ConfigError(f"{name}: expected 1 channel, got {t.channels}")
        return t.array[:, :, 0].T.astype(dtype)

    g = read_tensor(os.path.join(directory, "gate.sapt")).array.reshape(-1).astype(dtype)
    xx = os.path.join(directory, "p_xx.sapt")
    p_xx = mat("p_xx.sapt") if os.path.exists(xx) else None
    return SapaParams(mat("p_x.sapt"), mat("p_y.sapt"), g[:-1], float(g[-1]), p_xx)
