"""Time the compiled core against the numpy fallback.

    python3 benchmarks/bench_backends.py [--sizes 32x32x64,64x64x256] [--repeat 3]
"""
import argparse
import time

import numpy as np

from sapa import _backend
from sapa.config import UpsamplerConfig
from sapa.similarity import init_params
from sapa.tensor import Tensor
from sapa.upsampler import sapa_forward


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="32x32x64,64x64x256")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    cfg = UpsamplerConfig("gated", "exp", 5, 32)
    print(f"{'size':<12}" + "".join(f"{b:>12}" for b in _backend.BACKENDS) + f"{'speedup':>10}")
    for size in args.sizes.split(","):
        h, w, c = (int(x) for x in size.split("x"))
        rng = np.random.default_rng(0)
        dec = Tensor(rng.standard_normal((h, w, c)), dtype=np.float32)
        enc = Tensor(rng.standard_normal((2 * h, 2 * w, c)), dtype=np.float32)
        p = init_params(c, 32, seed=0)
        times = {b: best_of(lambda b=b: sapa_forward(enc, dec, p, cfg, threads=args.threads, backend=b),
                            args.repeat)
                 for b in _backend.BACKENDS}
        speedup = times["python"] / times["compiled"] if "compiled" in times else 1.0
        print(f"{size:<12}" + "".join(f"{t:>11.4f}s" for t in times.values()) + f"{speedup:>9.2f}x")


if __name__ == "__main__":
    main()
