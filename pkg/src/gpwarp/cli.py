"""Command-line front end.

Exit codes: 0 success, 2 input error (bad flags, unreadable or malformed
files), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io as _io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import bspline, gp, hyperparams, io, metrics, synth
from .benchmark import METHODS, run_benchmark
from .geometry import Grid
from .warp import WarpConvention, warp_image

EXIT_INPUT = 2
EXIT_NUMERIC = 3


class InputError(Exception):
    pass


def _threads(args) -> int:
    n = args.threads
    if n is None:
        env = os.environ.get("GPWARP_THREADS")
        n = int(env) if env else os.cpu_count() or 1
    if n < 1:
        raise InputError("--threads must be >= 1")
    return n


@contextlib.contextmanager
def _thread_limits(n: int):
    """Cap compiled-kernel threads at ``n``; BLAS stays single threaded so
    factorizations are reproducible for any ``n``."""
    import numba
    from threadpoolctl import threadpool_limits

    old = numba.get_num_threads()
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    try:
        with threadpool_limits(limits=1, user_api="blas"):
            yield
    finally:
        numba.set_num_threads(old)


def _out(path):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", newline="", encoding="utf-8")


def _load_params(path) -> gp.KernelParams:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return gp.KernelParams(
            data["sigma"], data["length_scale"], data.get("jitter", gp.DEFAULT_JITTER)
        )
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read params {path}: {exc}") from None


def _finite_or_none(x: float):
    return x if math.isfinite(x) else None


def cmd_tune(args):
    corr = io.read_landmarks(args.landmarks)
    conv = WarpConvention(args.warp_convention)
    init = hyperparams.estimate_mean(corr, args.length_scale_sqrt, args.jitter)
    out = {"method": args.method, "converged": True}
    if args.method == "mean":
        params = init
    elif args.method == "nml":
        res = hyperparams.estimate_nml(corr, init, conv)
        params = res.params
        out.update(converged=res.converged, nml=res.nml, init_nml=res.init_nml,
                   iterations=res.iterations)
    else:
        if not (args.source and args.target):
            raise InputError("--method dgs requires --source and --target")
        cfg = hyperparams.DgsConfig(io.read_volume(args.source), io.read_volume(args.target),
                                    conv, args.fill)
        params, table = hyperparams.estimate_dgs(corr, cfg, args.length_scale_sqrt, args.jitter)
        out["rmse_table"] = [
            {"sigma": c.sigma, "length_scale": c.length_scale, "rmse": _finite_or_none(c.rmse)}
            for c in table
        ]
    out.update(sigma=params.sigma, length_scale=params.length_scale, jitter=params.jitter)
    with _out(args.out) as fh:
        json.dump(out, fh, indent=2)
        fh.write("\n")


def cmd_interpolate(args):
    corr = io.read_landmarks(args.landmarks)
    grid = io.read_volume(args.grid_like).grid
    conv = WarpConvention(args.warp_convention)
    if args.method == "gp":
        if not args.params:
            raise InputError("--method gp requires --params")
        model = gp.fit(corr, _load_params(args.params), conv)
        result = gp.dense_field(model, grid, args.chunk_size, variance=not args.no_variance)
    else:
        spacing = args.control_spacing
        lam = 1e-6 if args.lam is None else args.lam
        field = bspline.fit_bspline(corr, grid, spacing, lam, conv)
        result = bspline.eval_bspline(field, grid)
    io.write_field(result, args.out)
    if args.uncertainty_pgm:
        unc = result.uncertainty_volume()
        axis = "xyz".index(args.slice_axis)
        index = args.slice_index if args.slice_index is not None else (
            grid.dims[axis] // 2 if grid.ndim == 3 else 0)
        window = args.window or (0.0, max(float(unc.samples.max()), 1e-12))
        io.write_slice_pgm(unc, axis, index, args.uncertainty_pgm, window)


def cmd_warp(args):
    field = io.read_field(args.field)
    source = io.read_volume(args.source)
    io.write_volume(warp_image(source, field, WarpConvention(args.warp_convention), args.fill),
                    args.out)


def cmd_evaluate(args):
    if args.metric == "mhd":
        value = metrics.mhd(io.read_points(args.a), io.read_points(args.b))
    else:
        a, b = io.read_volume(args.a), io.read_volume(args.b)
        if args.metric == "rmse":
            value = metrics.rmse(a, b)
        elif args.metric == "mismatch":
            value = metrics.mismatch_fraction(a, b, args.tol)
        else:
            value = metrics.mean_abs_diff(a, b)
    with _out(args.out) as fh:
        fh.write("metric,value\n")
        fh.write(f"{args.metric},{io.fmt(value)}\n")


def _grid_from_args(args) -> Grid:
    if args.grid_like:
        return io.read_volume(args.grid_like).grid
    if not args.dims:
        raise InputError("give --dims or --grid-like")
    return Grid(args.dims, args.spacing, args.origin)


def _bump_from_args(args, grid):
    return synth.make_bump_deformation(grid, args.center, args.amplitude, args.radius)


def cmd_synth(args):
    grid = _grid_from_args(args)
    if args.what == "phantom":
        io.write_volume(synth.make_phantom(grid, args.kind, args.seed), args.out)
    elif args.what == "deformation":
        io.write_field(_bump_from_args(args, grid).dense(grid, pullback=args.pullback), args.out)
    elif args.what == "landmarks":
        corr = synth.sample_landmarks(_bump_from_args(args, grid), grid, args.n, args.seed)
        if args.fraction < 1.0:
            corr = synth.subsample(corr, args.fraction, args.subsample_seed)
        io.write_landmarks(corr, args.out)


def cmd_benchmark(args):
    rows = run_benchmark(
        args.seed, size=args.size, n_features=args.features, fraction=args.fraction,
        methods=tuple(args.methods), convention=WarpConvention(args.warp_convention),
        sqrt=args.length_scale_sqrt, tol=args.tol,
    )
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "metric", "value", "wall_ms"])
    for r in rows:
        w.writerow([r.method, r.metric, io.fmt(r.value), f"{r.wall_ms:.3f}" if args.timing else ""])
    with _out(args.out) as fh:
        fh.write(buf.getvalue())
    if not any(math.isfinite(r.value) for r in rows):
        raise ArithmeticError("every method failed")


def _floats(n):
    return dict(nargs=n, type=float, metavar="V")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="cap on internal parallelism (default: $GPWARP_THREADS or all cores)")

    conv = argparse.ArgumentParser(add_help=False)
    conv.add_argument("--warp-convention", choices=[c.value for c in WarpConvention],
                      default="pullback")

    lscale = argparse.ArgumentParser(add_help=False)
    lscale.add_argument("--length-scale-sqrt", action="store_true",
                        help="use sqrt of mean squared pairwise distance as length scale")

    p = argparse.ArgumentParser(prog="gpwarp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("tune", parents=[common, conv, lscale], help="estimate kernel hyperparameters")
    t.add_argument("--method", choices=["mean", "nml", "dgs"], required=True)
    t.add_argument("--landmarks", required=True)
    t.add_argument("--source")
    t.add_argument("--target")
    t.add_argument("--jitter", type=float, default=gp.DEFAULT_JITTER)
    t.add_argument("--fill", type=float, default=0.0)
    t.add_argument("--out")
    t.set_defaults(func=cmd_tune)

    i = sub.add_parser("interpolate", parents=[common, conv], help="sparse to dense field")
    i.add_argument("--method", choices=["gp", "bspline"], required=True)
    i.add_argument("--landmarks", required=True)
    i.add_argument("--grid-like", required=True, help="volume whose grid the field is computed on")
    i.add_argument("--params", help="kernel params JSON (from tune)")
    i.add_argument("--control-spacing", type=float, help="B-spline control spacing in mm")
    i.add_argument("--lambda", dest="lam", type=float, help="B-spline ridge weight (default 1e-6)")
    i.add_argument("--chunk-size", type=int, default=gp.DEFAULT_CHUNK)
    i.add_argument("--no-variance", action="store_true")
    i.add_argument("--uncertainty-pgm", help="write a PGM slice of the uncertainty map")
    i.add_argument("--slice-axis", choices=list("xyz"), default="z")
    i.add_argument("--slice-index", type=int)
    i.add_argument("--window", **_floats(2))
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_interpolate)

    w = sub.add_parser("warp", parents=[common, conv], help="apply a dense field to a volume")
    w.add_argument("--field", required=True)
    w.add_argument("--source", required=True)
    w.add_argument("--out", required=True)
    w.add_argument("--fill", type=float, default=0.0)
    w.set_defaults(func=cmd_warp)

    e = sub.add_parser("evaluate", parents=[common], help="compare volumes or point sets")
    e.add_argument("--metric", choices=["rmse", "mismatch", "mad", "mhd"], required=True)
    e.add_argument("--a", required=True)
    e.add_argument("--b", required=True)
    e.add_argument("--tol", type=float, default=0.5)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("synth", help="synthetic phantoms, deformations and landmarks")
    ssub = s.add_subparsers(dest="what", required=True)
    gridp = argparse.ArgumentParser(add_help=False)
    gridp.add_argument("--grid-like")
    gridp.add_argument("--dims", nargs="+", type=int)
    gridp.add_argument("--spacing", nargs="+", type=float)
    gridp.add_argument("--origin", nargs="+", type=float)
    gridp.add_argument("--out", required=True)
    bump = argparse.ArgumentParser(add_help=False)
    bump.add_argument("--center", nargs="+", type=float, required=True)
    bump.add_argument("--amplitude", nargs="+", type=float, required=True)
    bump.add_argument("--radius", type=float, required=True)

    sp = ssub.add_parser("phantom", parents=[common, gridp])
    sp.add_argument("--kind", choices=["binary_blob", "gradient_ramp"], default="binary_blob")
    sp.add_argument("--seed", type=int, default=0)
    sd = ssub.add_parser("deformation", parents=[common, gridp, bump])
    sd.add_argument("--pullback", action="store_true",
                    help="write the inverse-consistent pullback field instead of v(x)")
    sl = ssub.add_parser("landmarks", parents=[common, gridp, bump])
    sl.add_argument("--n", type=int, required=True)
    sl.add_argument("--seed", type=int, default=0)
    sl.add_argument("--fraction", type=float, default=1.0)
    sl.add_argument("--subsample-seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    b = sub.add_parser("benchmark", parents=[common, conv, lscale],
                       help="MEAN/NML/DGS/B-spline comparison on a synthetic case")
    b.add_argument("--seed", type=int, default=42)
    b.add_argument("--size", type=int, default=64)
    b.add_argument("--features", type=int, default=1000)
    b.add_argument("--fraction", type=float, default=0.2)
    b.add_argument("--methods", nargs="+", choices=METHODS, default=list(METHODS))
    b.add_argument("--tol", type=float, default=0.5)
    b.add_argument("--timing", action="store_true", help="fill the wall_ms column")
    b.add_argument("--out")
    b.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        n = _threads(args) if hasattr(args, "threads") else 1
        with _thread_limits(n):
            args.func(args)
    except (np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"gpwarp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, ValueError, IndexError, OSError) as exc:
        print(f"gpwarp: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
