"""Command-line entry point: ``sapa <subcommand> ...``.

Exit codes: 0 success, 1 failed check, 2 usage or file/format error.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
import time

import numpy as np

from . import _backend
from .complexity import comparison_table, format_csv, format_table
from .config import NormKind, UpsamplerConfig
from .errors import ConfigError, FormatError, NumericError
from .fixtures import two_cluster
from .gradients import gradcheck, random_instance
from .kernels import KernelField
from .pgm import write_pgm
from .similarity import PARAM_FILES, SimilarityKind, init_params, load_params
from .tensor import Tensor, read_tensor, write_tensor
from .upsampler import sapa_forward

log = logging.getLogger("sapa")

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _add_operator_flags(p):
    p.add_argument("--sim", choices=[k.value for k in SimilarityKind], default="gated")
    p.add_argument("--norm", choices=[k.value for k in NormKind], default="exp")
    p.add_argument("--k", type=int, default=5, help="kernel size (odd)")
    p.add_argument("--d", type=int, default=32, help="embedding dim")
    p.add_argument("--ratio", type=int, default=2)


def _add_run_flags(p, backends=("compiled", "python"), backend=None):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--f64", action="store_true", help="compute in 64-bit")
    p.add_argument("--backend", choices=list(backends), default=backend)


def _config(args) -> UpsamplerConfig:
    return UpsamplerConfig(args.sim, args.norm, args.k, args.d, args.ratio)


def _params_for(args, dec_channels, enc_channels):
    cfg_sim = SimilarityKind.parse(args.sim)
    if cfg_sim is SimilarityKind.INNER:
        return None
    d = args.params
    if d and any(os.path.exists(os.path.join(d, f)) for f in PARAM_FILES):
        return load_params(d)
    return init_params(dec_channels, args.d, seed=args.seed, enc_channels=enc_channels)


def cmd_upsample(args) -> int:
    enc = read_tensor(args.encoder)
    dec = read_tensor(args.decoder)
    dtype = np.float64 if args.f64 else np.float32
    enc, dec = enc.astype(dtype), dec.astype(dtype)
    cfg = _config(args)
    r = cfg.ratio
    if enc.shape[:2] != (r * dec.height, r * dec.width):
        raise ConfigError(
            f"encoder is {enc.height}x{enc.width}; ratio {r} on a {dec.height}x{dec.width} "
            f"decoder expects ({r * dec.height}, {r * dec.width})"
        )
    params = _params_for(args, dec.channels, enc.channels)
    out, kernels = sapa_forward(enc, dec, params, cfg, threads=args.threads, backend=args.backend)
    write_tensor(out, args.output)
    if args.kernels_out:
        write_tensor(kernels.to_tensor(), args.kernels_out)
    if args.kernel_map:
        u, v = args.offset if args.offset else (-(cfg.kernel_size // 2),) * 2
        write_pgm(kernels.offset_map(u, v), args.kernel_map)
    log.info("wrote %s (%dx%dx%d)", args.output, *out.shape)
    return EXIT_OK


def cmd_kernel_map(args) -> int:
    field = KernelField.from_tensor(read_tensor(args.kernels))
    r = field.k // 2
    u, v = args.offset if args.offset else (-r, -r)
    if not (-r <= u <= r and -r <= v <= r):
        raise UsageError(f"offset ({u}, {v}) outside the {field.k}x{field.k} window [-{r}, {r}]")
    write_pgm(field.offset_map(u, v), args.image)
    return EXIT_OK


def cmd_synth(args) -> int:
    if min(args.height, args.width, args.channels) < 1:
        raise UsageError("dimensions must be positive")
    enc, dec, _, _ = two_cluster(args.height, args.width, args.channels, seed=args.seed,
                                 ratio=args.ratio, noise=args.noise)
    os.makedirs(args.out_dir, exist_ok=True)
    write_tensor(dec, os.path.join(args.out_dir, "decoder.sapt"))
    write_tensor(enc, os.path.join(args.out_dir, "encoder.sapt"))
    print(f"wrote {os.path.join(args.out_dir, 'decoder.sapt')} ({dec.height}x{dec.width}x{dec.channels}) "
          f"and encoder.sapt ({enc.height}x{enc.width}x{enc.channels})")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    worst = {}
    for i in range(args.instances):
        inst = random_instance(args.seed + i, args.sim, height=args.size, width=args.size,
                               channels=args.channels, embed_dim=args.d, ratio=args.ratio,
                               kernel_size=args.k)
        report = gradcheck(*inst, step=args.step, tolerance=args.tol)
        for name, err in report.max_rel_error.items():
            worst[name] = max(worst.get(name, 0.0), err)
    ok = all(v < args.tol for v in worst.values())
    for name, err in worst.items():
        print(f"{name:<10} max_rel_error={err:.3e} {'ok' if err < args.tol else 'FAIL'}")
    print(f"gradcheck {args.sim}: {'PASS' if ok else 'FAIL'} (tol {args.tol:g})")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_flops(args) -> int:
    rows = comparison_table(args.C, args.d, args.K)
    print(format_table(rows))
    print()
    print(format_csv(rows))
    return EXIT_OK


def _parse_size(text):
    try:
        h, w, c = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"size {text!r} is not HxWxC") from None
    return h, w, c


def cmd_bench(args) -> int:
    sizes = [_parse_size(s) for s in args.sizes.split(",")]
    backends = list(_backend.BACKENDS) if args.backend == "both" else [args.backend]
    cfg = _config(args)
    dtype = np.float64 if args.f64 else np.float32
    print("backend,size,threads,seconds,points_per_second,checksum")
    sums = {}
    for h, w, c in sizes:
        rng = np.random.default_rng(args.seed)
        dec = Tensor(rng.standard_normal((h, w, c)), dtype=dtype)
        enc = Tensor(rng.standard_normal((cfg.ratio * h, cfg.ratio * w, c)), dtype=dtype)
        params = None if cfg.similarity is SimilarityKind.INNER else init_params(c, cfg.embed_dim, args.seed)
        for backend in backends:
            for t in range(1, args.threads + 1):
                best = float("inf")
                for _ in range(args.repeat):
                    t0 = time.perf_counter()
                    out, kern = sapa_forward(enc, dec, params, cfg, threads=t, backend=backend)
                    best = min(best, time.perf_counter() - t0)
                digest = hashlib.sha256(out.array.tobytes() + kern.weights.tobytes()).hexdigest()[:16]
                sums.setdefault((backend, h, w, c), set()).add(digest)
                pts = out.height * out.width
                print(f"{backend},{h}x{w}x{c},{t},{best:.4f},{pts / best:.0f},{digest}")
    if any(len(v) > 1 for v in sums.values()):
        print("checksum differs across thread counts", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sapa", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("upsample", help="upsample a decoder tensor guided by an encoder tensor")
    p.add_argument("encoder")
    p.add_argument("decoder")
    p.add_argument("output")
    p.add_argument("--params", help="params directory (p_x.sapt, p_y.sapt, gate.sapt)")
    p.add_argument("--kernels-out", help="also write the kernel field (SAPT, C = K*K)")
    p.add_argument("--kernel-map", help="also write a PGM of one kernel offset")
    p.add_argument("--offset", type=int, nargs=2, metavar=("U", "V"))
    _add_operator_flags(p)
    _add_run_flags(p)
    p.set_defaults(func=cmd_upsample)

    p = sub.add_parser("kernel-map", help="export one kernel offset as a grayscale PGM")
    p.add_argument("kernels")
    p.add_argument("image")
    p.add_argument("--offset", type=int, nargs=2, metavar=("U", "V"),
                   help="window offset; default is the top-left weight")
    p.set_defaults(func=cmd_kernel_map)

    p = sub.add_parser("synth", help="write a two-cluster decoder/encoder pair")
    p.add_argument("out_dir")
    p.add_argument("--height", type=int, default=16)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--ratio", type=int, default=2)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    _add_operator_flags(p)
    p.set_defaults(d=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=1)
    p.add_argument("--size", type=int, default=6, help="decoder height and width")
    p.add_argument("--channels", type=int, default=4)
    p.add_argument("--step", type=float, default=1e-6)
    p.add_argument("--tol", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("flops", help="print the complexity comparison table")
    p.add_argument("C", type=int)
    p.add_argument("d", type=int)
    p.add_argument("K", type=int)
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("bench", help="throughput per size, thread count and backend")
    p.add_argument("--sizes", default="32x32x64,64x64x256", help="comma list of HxWxC decoder sizes")
    p.add_argument("--repeat", type=int, default=3)
    _add_operator_flags(p)
    _add_run_flags(p, ("compiled", "python", "both"), "both")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "norm", "exp") != "exp" and args.command == "gradcheck":
        print("error: gradcheck supports --norm exp only", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError, FormatError, NumericError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
