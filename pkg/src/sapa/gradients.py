"""Analytic backward pass of the SAPA forward, and a finite-difference referee."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Dict, Optional

import numpy as np

from ._fallback import window_index
from .config import NormKind, UpsamplerConfig
from .errors import ConfigError
from .kernels import _check_shapes, _prepare
from .similarity import SapaParams, SimilarityKind, embed, init_params
from .tensor import Tensor, as_array
from .upsampler import sapa_forward


@dataclass
class GradBundle:
    """Vector-Jacobian product of the forward pass w.r.t. every input.

    Parameter gradients are ``None`` when the matching parameter does not
    exist (no params for inner similarity, no ``p_xx`` outside the expanded
    gated form).
    """

    d_encoder: Tensor
    d_decoder: Tensor
    d_p_x: Optional[np.ndarray] = None
    d_p_y: Optional[np.ndarray] = None
    d_gate_w: Optional[np.ndarray] = None
    d_gate_bias: float = 0.0
    d_p_xx: Optional[np.ndarray] = None

    def groups(self) -> Dict[str, np.ndarray]:
        out = {"encoder": self.d_encoder.array, "decoder": self.d_decoder.array}
        for name in ("p_x", "p_y", "gate_w", "p_xx"):
            val = getattr(self, "d_" + name)
            if val is not None:
                out[name] = val
        if self.d_gate_w is not None:
            out["gate_b"] = np.array([self.d_gate_bias])
        return out


def layer_norm_backward(x, d_out, eps):
    mu = x.mean(axis=-1, keepdims=True)
    sigma = np.sqrt(np.square(x - mu).mean(axis=-1, keepdims=True) + eps)
    xhat = (x - mu) / sigma
    return (d_out - d_out.mean(axis=-1, keepdims=True)
            - xhat * (d_out * xhat).mean(axis=-1, keepdims=True)) / sigma


def _scatter(n_rows, idx, values):
    # np.add.at accumulates in index order, so repeated border reads sum deterministically
    out = np.zeros((n_rows,) + values.shape[idx.ndim:], dtype=values.dtype)
    np.add.at(out, idx, values)
    return out


def sapa_backward(encoder, decoder, params: SapaParams | None, config: UpsamplerConfig,
                  d_output) -> GradBundle:
    """Gradients of ``sum(d_output * forward(...))`` in 64-bit."""
    if config.norm is not NormKind.EXP:
        raise ConfigError(f"backward is implemented for the exp normalizer only, got {config.norm.value}")
    enc, dec = _prepare(as_array(encoder).astype(np.float64), as_array(decoder).astype(np.float64))
    _check_shapes(enc, dec, config.ratio)
    g_out = np.asarray(as_array(d_output), dtype=np.float64)
    h, w, c = dec.shape
    ratio, k = config.ratio, config.kernel_size
    oh, ow = h * ratio, w * ratio
    if g_out.shape != (oh, ow, c):
        raise ConfigError(f"d_output must be {(oh, ow, c)}, got {g_out.shape}")
    p = params.astype(np.float64) if params is not None else None
    kind = config.similarity
    eps = p.layernorm_eps if p is not None else 1e-5

    emb = embed(enc, dec, p, kind, ratio)
    idx = window_index(h, w, k, ratio)
    n = oh * ow
    d_dim = emb.keys.shape[2]
    kf = emb.keys.reshape(h * w, d_dim)
    q = emb.queries.reshape(n, d_dim)
    kwin = kf[idx]  # (N, K*K, D)
    scores = np.einsum("npd,nd->np", kwin, q)
    wts = np.exp(scores - scores.max(axis=1, keepdims=True))
    wts /= wts.sum(axis=1, keepdims=True)

    gf = g_out.reshape(n, c)
    df = dec.reshape(h * w, c)
    d_w = np.einsum("nc,npc->np", gf, df[idx])
    d_dec = _scatter(h * w, idx, wts[:, :, None] * gf[:, None, :])
    d_s = wts * (d_w - (wts * d_w).sum(axis=1, keepdims=True))
    d_q = np.einsum("np,npd->nd", d_s, kwin)
    d_k = _scatter(h * w, idx, d_s[:, :, None] * q[:, None, :])

    xn = emb.dec_ln.reshape(h * w, c)
    yn = emb.enc_ln.reshape(n, enc.shape[2])
    grads = {}
    if kind is SimilarityKind.INNER:
        d_yn, d_xn = d_q, d_k
        if p is not None:
            grads = dict(d_p_x=np.zeros_like(p.p_x), d_p_y=np.zeros_like(p.p_y))
    else:
        if kind is SimilarityKind.GATED:
            rows = np.arange(oh) // ratio
            cols = np.arange(ow) // ratio
            lidx = (rows[:, None] * w + cols[None, :]).reshape(n)
            g = emb.gate.reshape(h * w)
            g_o = g[lidx]
            e = emb.enc_embed.reshape(n, d_dim)
            s = emb.self_embed.reshape(h * w, d_dim)
            d_e = g_o[:, None] * d_q
            d_self = _scatter(h * w, lidx, (1.0 - g_o)[:, None] * d_q)
            d_g = _scatter(h * w, lidx, np.einsum("nd,nd->n", d_q, e - s[lidx]))
            d_z = d_g * g * (1.0 - g)
            d_xn = d_z[:, None] * p.gate_w[None, :]
            grads["d_gate_w"] = d_z @ xn
            grads["d_gate_bias"] = float(d_z.sum())
        else:
            d_e = d_q
            d_xn = np.zeros_like(xn)
        grads["d_p_y"] = d_e.T @ yn
        d_yn = d_e @ p.p_y
        d_px = d_k.T @ xn
        d_xn = d_xn + d_k @ p.p_x
        if kind is SimilarityKind.GATED:
            if p.p_xx is None:
                d_px = d_px + d_self.T @ xn
                d_xn = d_xn + d_self @ p.p_x
            else:
                grads["d_p_xx"] = d_self.T @ xn
                d_xn = d_xn + d_self @ p.p_xx
        else:
            grads["d_gate_w"] = np.zeros_like(p.gate_w)
        grads["d_p_x"] = d_px

    d_dec = d_dec + layer_norm_backward(df, d_xn, eps)
    d_enc = layer_norm_backward(enc.reshape(n, -1), d_yn, eps)
    return GradBundle(Tensor(d_enc.reshape(enc.shape)), Tensor(d_dec.reshape(dec.shape)), **grads)


def finite_diff(fn: Callable[[np.ndarray], float], at, step: float = 1e-6) -> np.ndarray:
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h`` per coordinate."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.array(at)
    x = x.astype(np.result_type(x.dtype, np.float64))
    flat = x.reshape(-1)
    grad = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = fn(x)
        flat[i] = orig - step
        lo = fn(x)
        flat[i] = orig
        grad[i] = (hi - lo) / (2.0 * step)
    return grad.reshape(x.shape)


def relative_error(analytic, numeric, floor: float = 1e-8) -> np.ndarray:
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def _substitute(enc, dec, params, group, value):
    if group == "encoder":
        return value, dec, params
    if group == "decoder":
        return enc, value, params
    if group == "gate_b":
        return enc, dec, replace(params, gate_b=value[0])
    return enc, dec, replace(params, **{group: value})


def encoder_finite_diff(forward, enc, g_out, step=1e-6):
    """Central differences for every encoder entry, one channel at a time.

    Output point l' reads only encoder point l', so perturbing channel c at
    every encoder point at once and splitting the change per output point
    gives each coordinate's own central difference (column compression of
    a block-diagonal Jacobian). ``forward`` maps an encoder array to output.
    """
    grad = np.empty_like(enc)
    for c in range(enc.shape[2]):
        x = enc.copy()
        x[:, :, c] += step
        hi = forward(x)
        x[:, :, c] = enc[:, :, c] - step
        lo = forward(x)
        grad[:, :, c] = np.sum(g_out * (hi - lo), axis=2) / (2.0 * step)
    return grad


def numeric_gradients(encoder, decoder, params, config, d_output, step=1e-6, groups=None,
                      precision=np.longdouble, compress_encoder=True):
    """Finite-difference estimate of every gradient group in :class:`GradBundle`.

    Forward evaluations run in ``precision`` (extended by default): at a 1e-6
    step, 64-bit rounding alone leaves ~1e-10 of noise in each difference,
    which swamps small gradient entries. The loss is also taken relative to
    the unperturbed output so its rounding scales with the perturbation.
    """
    enc = as_array(encoder).astype(precision)
    dec = as_array(decoder).astype(precision)
    p = params.astype(precision) if params is not None else None
    g_out = np.asarray(as_array(d_output), dtype=precision)
    base = sapa_forward(enc, dec, p, config, backend="python")[0].array

    values = {"encoder": enc, "decoder": dec}
    if p is not None and config.similarity is not SimilarityKind.INNER:
        values.update(p_x=p.p_x, p_y=p.p_y)
        if config.similarity is SimilarityKind.GATED:
            values.update(gate_w=p.gate_w, gate_b=np.array([p.gate_b]))
            if p.p_xx is not None:
                values["p_xx"] = p.p_xx
    out = {}
    for name, val in values.items():
        if groups is not None and name not in groups:
            continue
        if name == "encoder" and compress_encoder:
            fwd = lambda x: sapa_forward(x, dec, p, config, backend="python")[0].array  # noqa: E731
            out[name] = encoder_finite_diff(fwd, enc, g_out, step)
            continue

        def loss(v, name=name):
            e2, d2, p2 = _substitute(enc, dec, p, name, v)
            y = sapa_forward(e2, d2, p2, config, backend="python")[0].array
            return np.sum(g_out * (y - base))

        out[name] = finite_diff(loss, val, step)
    return out


@dataclass
class GradcheckReport:
    max_rel_error: Dict[str, float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(v < self.tolerance for v in self.max_rel_error.values())

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values())


def random_instance(seed, kind, height=6, width=6, channels=4, embed_dim=3, ratio=2,
                    kernel_size=5, expanded=False):
    """Seeded (encoder, decoder, params, config, d_output) for gradient checks."""
    rng = np.random.default_rng(seed)
    config = UpsamplerConfig(kind, NormKind.EXP, kernel_size, embed_dim, ratio)
    dec = rng.standard_normal((height, width, channels))
    enc = rng.standard_normal((ratio * height, ratio * width, channels))
    params = init_params(channels, embed_dim, seed=seed + 1, expanded=expanded)
    params = replace(params, gate_b=float(rng.uniform(-0.5, 0.5)))
    d_out = rng.standard_normal((ratio * height, ratio * width, channels))
    return enc, dec, params, config, d_out


def gradcheck(encoder, decoder, params, config, d_output, step=1e-6, tolerance=1e-5,
              floor=1e-8, precision=np.longdouble) -> GradcheckReport:
    """Compare :func:`sapa_backward` (64-bit) against central differences."""
    analytic = sapa_backward(encoder, decoder, params, config, d_output).groups()
    numeric = numeric_gradients(encoder, decoder, params, config, d_output, step,
                                precision=precision)
    errs = {name: float(relative_error(analytic[name], num, floor).max())
            for name, num in numeric.items()}
    return GradcheckReport(errs, tolerance)
