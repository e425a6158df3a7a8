"""Naive per-output-point SAPA forward used as an independent referee.

Written directly from the operator definition with explicit loops; shares
no code with the package.
"""
import math

import numpy as np


def _ln(v, eps):
    n = len(v)
    mu = sum(v) / n
    var = sum((x - mu) ** 2 for x in v) / n
    s = math.sqrt(var + eps)
    return np.array([(x - mu) / s for x in v])


def _h(s, norm):
    if norm == "relu":
        return max(s, 0.0)
    if norm == "sigmoid":
        return 1.0 / (1.0 + math.exp(-s))
    if norm == "softplus":
        return math.log1p(math.exp(s))
    raise ValueError(norm)


def reference_forward(enc, dec, p_x, p_y, gate_w, gate_b, kind, k, ratio, norm="exp",
                      eps=1e-5, p_xx=None):
    """Returns (output, weights) in float64; ``weights`` is (rH, rW, K*K)."""
    enc = np.asarray(enc, dtype=np.float64)
    dec = np.asarray(dec, dtype=np.float64)
    H, W, C = dec.shape
    OH, OW = H * ratio, W * ratio
    r = k // 2
    out = np.zeros((OH, OW, C))
    weights = np.zeros((OH, OW, k * k))
    xln = {(i, j): _ln(list(dec[i, j]), eps) for i in range(H) for j in range(W)}
    for oi in range(OH):
        for oj in range(OW):
            ci, cj = oi // ratio, oj // ratio
            y = _ln(list(enc[oi, oj]), eps)
            if kind == "gated":
                xc = xln[(ci, cj)]
                z = sum(gate_w[c] * xc[c] for c in range(C)) + gate_b
                g = 1.0 / (1.0 + math.exp(-z))
                self_p = p_x if p_xx is None else p_xx
            scores = []
            cells = []
            for u in range(-r, r + 1):
                for v in range(-r, r + 1):
                    ri = min(max(ci + u, 0), H - 1)
                    rj = min(max(cj + v, 0), W - 1)
                    cells.append((ri, rj))
                    x = xln[(ri, rj)]
                    if kind == "inner":
                        s = float(np.dot(x, y))
                    elif kind == "bilinear":
                        s = float(x @ (p_x.T @ p_y) @ y)
                    else:
                        s = float(x @ p_x.T @ (g * (p_y @ y) + (1 - g) * (self_p @ xc)))
                    scores.append(s)
            if norm == "exp":
                m = max(scores)
                e = [math.exp(s - m) for s in scores]
                tot = sum(e)
                wts = [x / tot for x in e]
            elif norm == "none":
                wts = scores
            else:
                hs = [_h(s, norm) for s in scores]
                tot = sum(hs)
                wts = [1.0 / len(hs)] * len(hs) if tot == 0 else [x / (tot + 1e-8) for x in hs]
            weights[oi, oj] = wts
            for wt, (ri, rj) in zip(wts, cells):
                out[oi, oj] += wt * dec[ri, rj]
    return out, weights
