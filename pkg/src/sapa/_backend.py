"""Pick the compiled window kernels when available, else the numpy ones.

Set ``SAPA_BACKEND=python`` to force the fallback at import time.
"""
import os

import numpy as np

from . import _fallback

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

BACKENDS = ("compiled", "python") if _core is not None else ("python",)
DEFAULT = "python" if os.environ.get("SAPA_BACKEND", "").lower() == "python" else BACKENDS[0]


def resolve(name=None):
    name = DEFAULT if name is None else name
    if name not in ("compiled", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "compiled" and _core is None:
        raise RuntimeError("compiled core is not built; reinstall with a C compiler")
    return name


def generate(keys, queries, ratio, k, norm, threads=1, backend=None, counter=None):
    dtype = np.result_type(keys.dtype, queries.dtype)
    keys = np.ascontiguousarray(keys, dtype=dtype)
    queries = np.ascontiguousarray(queries, dtype=dtype)
    if resolve(backend) == "compiled" and counter is None:
        return _core.generate(keys, queries, ratio, k, norm, threads)
    return _fallback.generate(keys, queries, ratio, k, norm, threads, counter)


def assemble(dec, weights, ratio, k, threads=1, backend=None, counter=None):
    dtype = np.result_type(dec.dtype, weights.dtype)
    dec = np.ascontiguousarray(dec, dtype=dtype)
    weights = np.ascontiguousarray(weights, dtype=dtype)
    if resolve(backend) == "compiled" and counter is None:
        return _core.assemble(dec, weights, ratio, k, threads)
    return _fallback.assemble(dec, weights, ratio, k, threads, counter)
