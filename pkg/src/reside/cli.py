"""Command-line interface.

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
"""

import argparse
import csv
import sys
import time
from contextlib import nullcontext
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    METHODS,
    PROFILES,
    build_config,
    format_config,
    load_config_file,
    parse_pairs,
)
from .data import MaskSpec, PhantomSpec, gen_mask, gen_phantom, nmse_db, synthesize_measurements
from .errors import DivergenceError, FormatError
from .formats import read_grid, read_mask, write_grid, write_mask, write_pgm
from .operator import ForwardOperator, apply_adjoint
from .pds import median_denoiser, pnp_reconstruct
from .selfcal import reside_reconstruct
from .wavelet import WaveletConfig, wavelet_denoiser

TRACE_HEADER = ("t", "snr_db", "sigma", "train_loss", "nmse_db")
ABLATION_SCHEDULES = (
    ("fixed10", {"schedule": "fixed", "snr_fixed": 10.0}),
    ("fixed25", {"schedule": "fixed", "snr_fixed": 25.0}),
    ("progressive", {"schedule": "progressive"}),
)


class UsageError(Exception):
    pass


def _fmt(v):
    return "" if v is None else f"{v:.9g}"


def write_trace(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for row in rows:
            w.writerow([row[0]] + [_fmt(v) for v in row[1:]])


def _threads(n):
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def run_method(cfg, op, y, truth=None):
    """Reconstruct with ``cfg.method``; returns ``(image, trace_rows)``."""
    rows = []

    def nmse(x):
        return None if truth is None else nmse_db(truth, x)

    if cfg.method == "zero-filled":
        x = apply_adjoint(op, y)
        return x, [(0, None, None, None, nmse(x))]
    if cfg.method == "reside":
        def sink(rec):
            rows.append((rec.t, rec.snr_db, rec.sigma, rec.train_loss, nmse(rec.x)))

        return reside_reconstruct(op, y, cfg.reside_config(), sink), rows

    if cfg.method == "l1-wavelet":
        denoiser = wavelet_denoiser(WaveletConfig(cfg.levels, cfg.lam), cfg.nu)
    else:
        denoiser = median_denoiser(cfg.median_size)

    def sink(t, x):
        if not np.all(np.isfinite(x)):
            raise DivergenceError(t)
        rows.append((t, None, None, None, nmse(x)))

    return pnp_reconstruct(op, y, cfg.pds_params(), denoiser, sink), rows


def _load_inputs(kspace, mask, truth):
    y = read_grid(kspace)
    m = read_mask(mask)
    if y.shape != m.shape:
        raise ValueError(f"k-space {y.shape} and mask {m.shape} differ in shape")
    t = read_grid(truth) if truth else None
    if t is not None and t.shape != y.shape:
        raise ValueError(f"truth {t.shape} and k-space {y.shape} differ in shape")
    return ForwardOperator(m), y, t


def _overrides(args):
    values, _ = parse_pairs(args.set or [])
    for key in ("iterations", "seed"):
        if getattr(args, key, None) is not None:
            values[key] = getattr(args, key)
    return values


def _dump_images(out, image, truth):
    stem = Path(out)
    scale = float(np.abs(truth).max()) if truth is not None else None
    write_pgm(stem.with_name(stem.name + ".pgm"), image, scale)
    if truth is not None:
        err = 1.5 * np.abs(image - truth)
        write_pgm(stem.with_name(stem.name + ".error.pgm"), err, scale)


def write_manifest(path, cfg, inputs, extra):
    lines = ["# reside run manifest", f"tool.version={__version__}"]
    lines += [f"input.{k}={v}" for k, v in inputs.items() if v]
    lines += format_config(cfg)
    lines += [f"{k}={v}" for k, v in extra.items()]
    Path(path).write_text("\n".join(lines) + "\n")


# -- commands --------------------------------------------------------------


def cmd_phantom(args):
    img = gen_phantom(PhantomSpec(args.size, args.phase))
    write_grid(args.out, img)
    if args.pgm:
        write_pgm(str(args.out) + ".pgm", img)
    print(f"norm={np.linalg.norm(img):.9g}")


def cmd_mask(args):
    spec = MaskSpec(args.kind, args.rate, args.acs, args.seed)
    mask = gen_mask(spec, args.rows, args.cols)
    write_mask(args.out, mask)
    print(f"acceleration={mask.acceleration:.9g} samples={mask.m}")


def cmd_measure(args):
    x = read_grid(args.image)
    mask = read_mask(args.mask)
    y = synthesize_measurements(x, mask, args.noise_std, args.seed)
    write_grid(args.out, y)
    print(f"samples={mask.m} norm={np.linalg.norm(y):.9g}")


def _resolve_config(args):
    file_values, meta = load_config_file(args.config) if args.config else ({}, {})
    cfg = build_config(args.method, args.profile, file_values, _overrides(args))
    return cfg, meta


def cmd_reconstruct(args):
    cfg, meta = _resolve_config(args)
    kspace = args.kspace or meta.get("input.kspace")
    mask = args.mask or meta.get("input.mask")
    truth = args.truth or meta.get("input.truth")
    if not (kspace and mask):
        raise UsageError("--kspace and --mask are required (or a manifest naming them)")
    op, y, x_true = _load_inputs(kspace, mask, truth)
    start = time.perf_counter()
    with _threads(args.threads):
        image, rows = run_method(cfg, op, y, x_true)
    elapsed = time.perf_counter() - start
    write_grid(args.out, image)
    _dump_images(args.out, image, x_true)
    if args.trace_out:
        write_trace(args.trace_out, rows)
    extra = {
        "mask.acceleration": f"{op.mask.acceleration:.9g}",
        "run.wall_seconds": f"{elapsed:.3f}",
        "run.threads": args.threads or "default",
    }
    if x_true is not None:
        final = nmse_db(x_true, image)
        extra["result.nmse_db"] = f"{final:.9g}"
        extra["result.zero_filled_nmse_db"] = f"{nmse_db(x_true, apply_adjoint(op, y)):.9g}"
        print(f"nmse_db={final:.9g}")
    write_manifest(str(args.out) + ".manifest.txt", cfg,
                   {"kspace": kspace, "mask": mask, "truth": truth}, extra)


def cmd_ablate_schedule(args):
    file_values, _ = load_config_file(args.config) if args.config else ({}, {})
    base = build_config("reside", args.profile, file_values, _overrides(args))
    op, y, x_true = _load_inputs(args.kspace, args.mask, args.truth)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = []
    for name, changes in ABLATION_SCHEDULES:
        cfg = replace(base, **changes)
        with _threads(args.threads):
            image, rows = run_method(cfg, op, y, x_true)
        write_trace(out_dir / f"trace_{name}.csv", rows)
        write_grid(out_dir / f"recon_{name}.rsdg", image)
        write_manifest(out_dir / f"recon_{name}.rsdg.manifest.txt", cfg,
                       {"kspace": args.kspace, "mask": args.mask, "truth": args.truth}, {})
        final = nmse_db(x_true, image)
        summary.append((name, final, min(r[4] for r in rows)))
        print(f"{name}: final_nmse_db={final:.9g}")
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("schedule", "final_nmse_db", "best_nmse_db"))
        for name, final, best in summary:
            w.writerow((name, _fmt(final), _fmt(best)))


def cmd_eval(args):
    print(f"nmse_db={nmse_db(read_grid(args.truth), read_grid(args.estimate)):.9g}")


# -- parser ----------------------------------------------------------------


def _add_run_options(p):
    p.add_argument("--config", help="key=value config file or a previous run manifest")
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--threads", type=int, help="BLAS thread count")


def build_parser():
    parser = argparse.ArgumentParser(prog="reside", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"reside {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="write a Shepp-Logan phantom")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--phase", choices=("none", "smooth"), default="none")
    p.add_argument("--pgm", action="store_true", help="also write a magnitude PGM")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("mask", help="write a sampling mask")
    p.add_argument("--kind", choices=("m1", "m2", "full"), required=True)
    p.add_argument("--rate", type=float, default=1.8)
    p.add_argument("--acs", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rows", type=int, default=128)
    p.add_argument("--cols", type=int, default=128)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("measure", help="synthesise masked k-space")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("reconstruct", help="reconstruct an image from masked k-space")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--kspace")
    p.add_argument("--mask")
    p.add_argument("--truth")
    p.add_argument("--trace-out")
    p.add_argument("--out", required=True)
    _add_run_options(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("ablate-schedule", help="compare training-SNR schedules")
    p.add_argument("--kspace", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out-dir", required=True)
    _add_run_options(p)
    p.set_defaults(func=cmd_ablate_schedule)

    p = sub.add_parser("eval", help="print NMSE of an estimate in dB")
    p.add_argument("--truth", required=True)
    p.add_argument("--estimate", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except DivergenceError as exc:
        print(f"reside: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (UsageError, FormatError, ValueError, OSError) as exc:
        print(f"reside: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
