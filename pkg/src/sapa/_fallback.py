"""Pure numpy implementations of the two hot kernels.

Both functions work on row blocks of the output so peak memory stays
bounded, and a thread pool over independent blocks gives the same bits
as a single-threaded run.
"""
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache

import numpy as np

NORM_NONE, NORM_EXP, NORM_RELU, NORM_SIGMOID, NORM_SOFTPLUS = range(5)
DENOM_EPS = 1e-8

# output points processed per block
_BLOCK_POINTS = 4096


@lru_cache(maxsize=64)
def window_index(h, w, k, ratio):
    """Flat decoder index of every (output point, window offset) pair.

    Shape ``(ratio*h * ratio*w, k*k)``; borders clamp to the nearest edge.
    """
    r = k // 2
    rows = np.arange(ratio * h) // ratio
    cols = np.arange(ratio * w) // ratio
    offs = np.arange(-r, r + 1)
    rr = np.clip(rows[:, None] + offs[None, :], 0, h - 1)  # (rH, K)
    cc = np.clip(cols[:, None] + offs[None, :], 0, w - 1)  # (rW, K)
    idx = rr[:, None, :, None] * w + cc[None, :, None, :]  # (rH, rW, K, K)
    idx = idx.reshape(ratio * h * ratio * w, k * k)
    idx.setflags(write=False)
    return idx


def normalize(scores, kind):
    """Apply h(x)/sum h(x) along the last axis."""
    if kind == NORM_NONE:
        return scores.copy()
    if kind == NORM_EXP:
        e = np.exp(scores - scores.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)
    if kind == NORM_RELU:
        h = np.maximum(scores, 0)
    elif kind == NORM_SIGMOID:
        e = np.exp(-np.abs(scores))
        h = np.where(scores >= 0, 1 / (1 + e), e / (1 + e))
    elif kind == NORM_SOFTPLUS:
        h = np.logaddexp(0, scores)
    else:
        raise ValueError(f"unknown norm code {kind}")
    h = h.astype(scores.dtype, copy=False)
    den = h.sum(axis=-1, keepdims=True)
    out = h / (den + scores.dtype.type(DENOM_EPS))
    zero = den[..., 0] == 0
    if zero.any():
        out[zero] = scores.dtype.type(1.0 / scores.shape[-1])
    return out


def _blocks(n_rows, row_len):
    step = max(1, _BLOCK_POINTS // max(row_len, 1))
    return [(s, min(s + step, n_rows)) for s in range(0, n_rows, step)]


def _run(fn, blocks, threads):
    if threads <= 1 or len(blocks) == 1:
        for b in blocks:
            fn(*b)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda b: fn(*b), blocks))


def window_scores(keys, queries, ratio, k, rows=None):
    """Raw scores ``(n, K*K)`` for output rows ``rows=(start, stop)``."""
    h, w, d = keys.shape
    oh, ow = queries.shape[:2]
    start, stop = rows if rows is not None else (0, oh)
    idx = window_index(h, w, k, ratio)[start * ow:stop * ow]
    kf = keys.reshape(h * w, d)
    q = queries.reshape(oh * ow, d)[start * ow:stop * ow]
    return np.einsum("npd,nd->np", kf[idx], q)


def generate(keys, queries, ratio, k, norm, threads=1, counter=None):
    oh, ow, _ = queries.shape
    out = np.empty((oh, ow, k * k), dtype=queries.dtype)
    flat = out.reshape(oh * ow, k * k)

    def work(start, stop):
        s = window_scores(keys, queries, ratio, k, (start, stop))
        flat[start * ow:stop * ow] = normalize(s, norm)

    _run(work, _blocks(oh, ow), threads)
    if counter is not None:
        counter(oh * ow * k * k * keys.shape[2], "inner product")
    return out


def assemble(dec, weights, ratio, k, threads=1, counter=None):
    h, w, c = dec.shape
    oh, ow, _ = weights.shape
    idx = window_index(h, w, k, ratio)
    df = dec.reshape(h * w, c)
    wf = weights.reshape(oh * ow, k * k)
    out = np.empty((oh, ow, c), dtype=np.result_type(dec.dtype, weights.dtype))
    of = out.reshape(oh * ow, c)

    def work(start, stop):
        sl = slice(start * ow, stop * ow)
        of[sl] = np.einsum("np,npc->nc", wf[sl], df[idx[sl]])

    _run(work, _blocks(oh, ow * max(1, c // 8)), threads)
    if counter is not None:
        counter(oh * ow * k * k * c, "assembly")
    return out
