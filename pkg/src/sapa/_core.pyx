# cython: language_level=3
"""Compiled window kernels: similarity scores + normalization, and assembly.

Each output row is written by exactly one thread and every per-window
reduction runs in a fixed order, so results do not depend on the thread
count.
"""
import numpy as np

cimport cython
from cython cimport floating
from cython.parallel cimport parallel, prange
from libc.math cimport exp, log1p, fabs
from libc.stdlib cimport malloc, free

cdef enum:
    NORM_NONE = 0
    NORM_EXP = 1
    NORM_RELU = 2
    NORM_SIGMOID = 3
    NORM_SOFTPLUS = 4

cdef double DENOM_EPS = 1e-8


cdef inline int clamp(int v, int lo, int hi) noexcept nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef inline double h_of(double s, int norm) noexcept nogil:
    cdef double e
    if norm == NORM_RELU:
        return s if s > 0 else 0.0
    if norm == NORM_SIGMOID:
        e = exp(-fabs(s))
        return 1.0 / (1.0 + e) if s >= 0 else e / (1.0 + e)
    # softplus, stable form
    return (s if s > 0 else 0.0) + log1p(exp(-fabs(s)))


cdef void normalize_row(double* s, int n, int norm) noexcept nogil:
    cdef int i
    cdef double m, tot
    if norm == NORM_NONE:
        return
    if norm == NORM_EXP:
        m = s[0]
        for i in range(1, n):
            if s[i] > m:
                m = s[i]
        tot = 0.0
        for i in range(n):
            s[i] = exp(s[i] - m)
            tot += s[i]
        for i in range(n):
            s[i] = s[i] / tot
        return
    tot = 0.0
    for i in range(n):
        s[i] = h_of(s[i], norm)
        tot += s[i]
    if tot == 0.0:
        for i in range(n):
            s[i] = 1.0 / n
        return
    for i in range(n):
        s[i] = s[i] / (tot + DENOM_EPS)


@cython.boundscheck(False)
@cython.wraparound(False)
def generate(const floating[:, :, ::1] keys, const floating[:, :, ::1] queries,
             int ratio, int k, int norm, int threads=1):
    """Normalized kernels ``(rH, rW, K*K)`` from decoder keys and encoder queries."""
    cdef int h = keys.shape[0], w = keys.shape[1], d = keys.shape[2]
    cdef int oh = queries.shape[0], ow = queries.shape[1]
    cdef int kk = k * k, r = k // 2
    cdef int i, j, u, v, c, p, ci, cj, ri, rj
    cdef double acc
    cdef double* buf
    cdef const floating* kp
    cdef const floating* qp
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((oh, ow, kk), dtype=dtype)
    cdef floating[:, :, ::1] out = out_arr
    if threads < 1:
        threads = 1
    with nogil, parallel(num_threads=threads):
        buf = <double*> malloc(kk * sizeof(double))
        for i in prange(oh, schedule="static"):
            ci = i // ratio
            for j in range(ow):
                cj = j // ratio
                p = 0
                for u in range(-r, r + 1):
                    ri = clamp(ci + u, 0, h - 1)
                    for v in range(-r, r + 1):
                        rj = clamp(cj + v, 0, w - 1)
                        kp = &keys[ri, rj, 0]
                        qp = &queries[i, j, 0]
                        acc = 0.0
                        for c in range(d):
                            acc = acc + kp[c] * qp[c]
                        buf[p] = acc
                        p = p + 1
                normalize_row(buf, kk, norm)
                for p in range(kk):
                    out[i, j, p] = <floating> buf[p]
        free(buf)
    return out_arr


@cython.boundscheck(False)
@cython.wraparound(False)
def assemble(const floating[:, :, ::1] dec, const floating[:, :, ::1] weights,
             int ratio, int k, int threads=1):
    """Weighted sum of each clamped decoder window, ``(rH, rW, C)``."""
    cdef int h = dec.shape[0], w = dec.shape[1], ch = dec.shape[2]
    cdef int oh = weights.shape[0], ow = weights.shape[1]
    cdef int r = k // 2
    cdef int i, j, u, v, c, p, ci, cj, ri, rj
    cdef double wt
    cdef double* acc
    cdef const floating* src
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((oh, ow, ch), dtype=dtype)
    cdef floating[:, :, ::1] out = out_arr
    if threads < 1:
        threads = 1
    with nogil, parallel(num_threads=threads):
        acc = <double*> malloc(ch * sizeof(double))
        for i in prange(oh, schedule="static"):
            ci = i // ratio
            for j in range(ow):
                cj = j // ratio
                for c in range(ch):
                    acc[c] = 0.0
                p = 0
                for u in range(-r, r + 1):
                    ri = clamp(ci + u, 0, h - 1)
                    for v in range(-r, r + 1):
                        rj = clamp(cj + v, 0, w - 1)
                        wt = weights[i, j, p]
                        src = &dec[ri, rj, 0]
                        for c in range(ch):
                            acc[c] = acc[c] + wt * src[c]
                        p = p + 1
                for c in range(ch):
                    out[i, j, c] = <floating> acc[c]
        free(acc)
    return out_arr
