"""Command line entry point: ``mapdeblur <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver did not
converge (only with ``--strict``).
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, apps
from .core import EnergyParams, gradients, poisson_reconstruct
from .deconv import DEFAULT_RATIO, blind_deconv_multiscale, blind_deconv_single_scale
from .energy import energy, energy_noblur_exact
from .io import DataError, read_image, read_kernel, write_image, write_kernel
from .synthetic import two_region_defocus

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONCONV = 0, 1, 2, 3
BREAKDOWN_FIELDS = ["total", "data", "sparsity", "kernel_prior", "converged"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _odd(text):
    v = int(text)
    if v < 1 or v % 2 == 0:
        raise argparse.ArgumentTypeError(f"{text} is not an odd positive integer")
    return v


def _params_from(args) -> EnergyParams:
    try:
        return EnergyParams(alpha=args.alpha, tau=args.tau, lambda_l=args.lambda_l,
                            lambda_k=args.lambda_k, irls_iters=args.irls_iters,
                            cg_tol=args.cg_tol, cg_max_iters=args.cg_max_iters)
    except ValueError as err:
        raise UsageError(str(err)) from err


def _add_params(p):
    d = EnergyParams()
    g = p.add_argument_group("energy parameters")
    g.add_argument("--alpha", type=float, default=d.alpha)
    g.add_argument("--tau", type=float, default=d.tau)
    g.add_argument("--lambda-l", type=float, default=d.lambda_l)
    g.add_argument("--lambda-k", type=float, default=d.lambda_k)
    g.add_argument("--irls-iters", type=int, default=d.irls_iters)
    g.add_argument("--cg-tol", type=float, default=d.cg_tol)
    g.add_argument("--cg-max-iters", type=int, default=d.cg_max_iters)
    p.add_argument("--strict", action="store_true", help="exit 3 if any solver did not converge")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def _write_rows(path, header, rows):
    fh = open(path, "w", newline="") if path and path != "-" else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    finally:
        if fh is not sys.stdout:
            fh.close()


def _breakdown_row(e):
    return [e.total, e.data, e.sparsity, e.kernel_prior, e.converged]


def _load_gradients(path):
    return gradients(read_image(path))


# ---- commands ----

def cmd_deblur(args):
    params = _params_from(args)
    img = read_image(args.input)
    b = gradients(img)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    size = (args.kernel_size, args.kernel_size)
    if args.multiscale:
        k, l, trace = blind_deconv_multiscale(b, size, params, args.iters, args.ratio)
    else:
        k, l, trace = blind_deconv_single_scale(b, size, params, args.iters)
    write_kernel(out / "kernel.txt", k)
    write_image(out / "latent.png", poisson_reconstruct(l, float(img.mean())))
    rows = list(trace.rows())
    header = ["level", "iteration", "total", "data", "sparsity", "kernel_prior", "after_kstep", "converged"]
    _write_rows(out / "trace.csv", header, [[r[h] for h in header] for r in rows])
    print(f"kernel {k.shape[1]}x{k.shape[0]} written to {out}")
    return all(r["converged"] for r in rows)


def cmd_energy(args):
    params = _params_from(args)
    b = _load_gradients(args.input)
    if args.exact_noblur:
        e = energy_noblur_exact(b, params)
        label = "opt_delta"
    else:
        if not args.kernel:
            raise UsageError("a kernel file is required unless --exact-noblur is given")
        e = energy(read_kernel(args.kernel), b, params)
        label = "irls"
    print(f"{label}: total={e.total:.9g} data={e.data:.9g} sparsity={e.sparsity:.9g} "
          f"kernel_prior={e.kernel_prior:.9g} converged={e.converged}")
    if args.csv:
        _write_rows(args.csv, ["kind"] + BREAKDOWN_FIELDS, [[label] + _breakdown_row(e)])
    return e.converged


def _dataset(args):
    if args.bundled or not args.pair:
        return analysis.bundled_dataset(args.bundled_n)
    items = []
    for item in args.pair:
        if ":" not in item:
            raise UsageError(f"pair {item!r} must look like IMAGE:KERNEL")
        img, ker = item.rsplit(":", 1)
        items.append((Path(img).stem, _load_gradients(img), read_kernel(ker)))
    return items


def _records_ok(records):
    return all(r.converged_gt and r.converged_delta for r in records if r.ok)


def cmd_sweep_lambda(args):
    params = _params_from(args)
    recs = analysis.lambda_sweep_dataset(_dataset(args), args.lambdas, args.alpha, params)
    analysis.write_csv(recs, sys.stdout if args.output == "-" else args.output)
    return _records_ok(recs)


def cmd_sweep_grid(args):
    params = _params_from(args)
    b = _load_gradients(args.input)
    recs = analysis.alpha_lambda_grid(b, read_kernel(args.kernel), args.alphas, args.lambdas,
                                      params, Path(args.input).stem, Path(args.kernel).stem)
    analysis.write_csv(recs, sys.stdout if args.output == "-" else args.output)
    return _records_ok(recs)


def cmd_sweep_length(args):
    params = _params_from(args)
    b = _load_gradients(args.input)
    kernels = None
    if args.mode == "provided":
        kernels = {n: np.ones(n) for n in args.lengths}
    sw = analysis.kernel_length_sweep(b, args.lengths, params, args.mode, kernels,
                                      horizontal=not args.vertical, iters=args.iters)
    rows = [[n] + _breakdown_row(e) for n, e, _ in sw.entries]
    rows.append(["opt_delta"] + _breakdown_row(sw.baseline))
    _write_rows(args.output, ["length"] + BREAKDOWN_FIELDS, rows)
    print(f"argmin length: {sw.argmin}", file=sys.stderr)
    return all(e.converged for _, e, _ in sw.entries)


def cmd_hist(args):
    try:
        recs = analysis.read_csv(args.csv)
    except OSError as err:
        raise DataError(f"{args.csv}: {err}") from err
    h = analysis.ratio_histogram(recs)
    for lam, pct, (hit, n) in zip(h.lambdas, h.percent, h.counts):
        print(f"{lam:.9g}\t{pct:.1f}%\t({hit}/{n})")
    print(f"argmax lambda_l: {h.argmax:.9g}")
    return True


def cmd_kernel_size(args):
    params = _params_from(args)
    b = _load_gradients(args.input)
    res = apps.select_kernel_size(b, args.sizes, params, args.iters, args.ratio)
    rows = [[s] + _breakdown_row(e) for s, e in sorted(res.energies.items())]
    _write_rows(args.output, ["size"] + BREAKDOWN_FIELDS, rows)
    for s, err in res.errors.items():
        print(f"size {s} failed: {err}", file=sys.stderr)
    print(f"selected size: {res.best}", file=sys.stderr)
    return all(e.converged for e in res.energies.values())


def cmd_streaks(args):
    params = _params_from(args)
    b = _load_gradients(args.input)
    patches = {Path(p).name: read_image(p) for p in args.patches}
    ranked = apps.rank_light_streak_patches(b, patches, params)
    rows = []
    for i, r in enumerate(ranked):
        if r.excluded:
            rows.append([i, r.patch_id, "", "", "", "", "", "excluded"])
        else:
            rows.append([i, r.patch_id] + _breakdown_row(r.energy) + [""])
    _write_rows(args.output, ["rank", "patch"] + BREAKDOWN_FIELDS + ["flag"], rows)
    return all(r.energy.converged for r in ranked if not r.excluded)


def cmd_defocus(args):
    params = _params_from(args)
    if args.input == "synthetic:two-region":
        img, _ = two_region_defocus()
    else:
        img = read_image(args.input)
    try:
        dp = apps.DefocusParams(radii=tuple(args.radii), window=args.window,
                                canny_low=args.canny_low, canny_high=args.canny_high,
                                prop_lambda=args.prop_lambda, ml_window=args.ml_window,
                                ml_epsilon=args.ml_epsilon, edge_stride=args.edge_stride)
    except ValueError as err:
        raise UsageError(str(err)) from err
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sm = apps.estimate_defocus_sparse(img, dp, params)
    if len(sm) == 0:
        raise DataError("no usable edge pixels")
    dense = apps.propagate_defocus(sm, img, dp)
    rmax = max(dp.radii) or 1.0
    write_image(out / "sparse.png", np.nan_to_num(sm.dense(0.0)) / rmax)
    write_image(out / "dense.png", dense / rmax)
    _write_rows(out / "sparse.csv", ["row", "col", "radius", "energy"],
                zip(sm.rows.tolist(), sm.cols.tolist(), sm.radius.tolist(), sm.energy.tolist()))
    print(f"{len(sm)} edge pixels, {len(sm.skipped)} skipped; maps scaled by 1/{rmax:g}")
    return True


def build_parser():
    p = _Parser(prog="mapdeblur", description="Blind deconvolution energy tools")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("deblur", help="blind deconvolution of a blurred image")
    s.add_argument("input")
    s.add_argument("--kernel-size", type=_odd, default=15)
    s.add_argument("--multiscale", action="store_true")
    s.add_argument("--iters", type=int, default=10, help="iterations (per level)")
    s.add_argument("--ratio", type=float, default=DEFAULT_RATIO)
    s.add_argument("-o", "--out-dir", default="deblur_out")
    _add_params(s)
    s.set_defaults(func=cmd_deblur)

    s = sub.add_parser("energy", help="kernel energy f(k)")
    s.add_argument("input")
    s.add_argument("kernel", nargs="?")
    s.add_argument("--exact-noblur", action="store_true")
    s.add_argument("--csv")
    _add_params(s)
    s.set_defaults(func=cmd_energy)

    lam_default = list(np.logspace(-5, -1, 9))
    s = sub.add_parser("sweep-lambda", help="ratio sweep over lambda_l on a dataset")
    s.add_argument("--bundled", action="store_true", help="use the bundled synthetic set (default)")
    s.add_argument("--bundled-n", type=int, default=10)
    s.add_argument("--pair", action="append", help="IMAGE:KERNEL, repeatable")
    s.add_argument("--lambdas", type=float, nargs="+", default=lam_default)
    s.add_argument("-o", "--output", default="-")
    _add_params(s)
    s.set_defaults(func=cmd_sweep_lambda)

    s = sub.add_parser("sweep-grid", help="ratio over an alpha x lambda_l grid")
    s.add_argument("input")
    s.add_argument("kernel")
    s.add_argument("--alphas", type=float, nargs="+", default=[0.1, 0.5, 1.0])
    s.add_argument("--lambdas", type=float, nargs="+", default=lam_default)
    s.add_argument("-o", "--output", default="-")
    _add_params(s)
    s.set_defaults(func=cmd_sweep_grid)

    s = sub.add_parser("sweep-length", help="energy of 1D kernels of several lengths")
    s.add_argument("input")
    s.add_argument("--lengths", type=_odd, nargs="+", default=[1, 3, 5, 7, 9, 11, 13, 15])
    s.add_argument("--mode", choices=["estimate", "provided"], default="estimate",
                   help="provided evaluates box kernels of each length")
    s.add_argument("--vertical", action="store_true")
    s.add_argument("--iters", type=int, default=10)
    s.add_argument("-o", "--output", default="-")
    _add_params(s)
    s.set_defaults(func=cmd_sweep_length)

    s = sub.add_parser("hist", help="success rate per lambda_l from a sweep CSV")
    s.add_argument("csv")
    s.set_defaults(func=cmd_hist)

    s = sub.add_parser("kernel-size", help="pick the kernel size with the lowest energy")
    s.add_argument("input")
    s.add_argument("--sizes", type=_odd, nargs="+", required=True)
    s.add_argument("--iters", type=int, default=10, help="iterations per pyramid level")
    s.add_argument("--ratio", type=float, default=DEFAULT_RATIO)
    s.add_argument("-o", "--output", default="-")
    _add_params(s)
    s.set_defaults(func=cmd_kernel_size)

    s = sub.add_parser("streaks", help="rank light-streak patches as kernel candidates")
    s.add_argument("input")
    s.add_argument("patches", nargs="+")
    s.add_argument("-o", "--output", default="-")
    _add_params(s)
    s.set_defaults(func=cmd_streaks)

    d = apps.DefocusParams()
    s = sub.add_parser("defocus", help="sparse and dense defocus maps")
    s.add_argument("input", help="image path or synthetic:two-region")
    s.add_argument("--radii", type=float, nargs="+", default=list(d.radii))
    s.add_argument("--window", type=int, default=d.window)
    s.add_argument("--canny-low", type=float, default=d.canny_low)
    s.add_argument("--canny-high", type=float, default=d.canny_high)
    s.add_argument("--prop-lambda", type=float, default=d.prop_lambda)
    s.add_argument("--ml-window", type=int, default=d.ml_window)
    s.add_argument("--ml-epsilon", type=float, default=d.ml_epsilon)
    s.add_argument("--edge-stride", type=int, default=d.edge_stride)
    s.add_argument("-o", "--out-dir", default="defocus_out")
    _add_params(s)
    s.set_defaults(func=cmd_defocus)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        ok = args.func(args)
    except UsageError as err:
        print(f"mapdeblur: usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ValueError, np.linalg.LinAlgError) as err:
        print(f"mapdeblur: error: {err}", file=sys.stderr)
        return EXIT_DATA
    if not ok and getattr(args, "strict", False):
        print("mapdeblur: solver did not converge", file=sys.stderr)
        return EXIT_NONCONV
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
