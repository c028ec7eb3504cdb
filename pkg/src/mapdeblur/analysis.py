"""Sweeps over alpha and lambda_l, kernel-length sweeps and success histograms.

Everything here is deterministic; records are sorted by their keys so that
the order in which sweep points are evaluated never shows up in the output.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .conv import BoundaryPolicy
from .core import EnergyParams, GradientImage, check_kernel, delta_kernel
from .energy import energy, energy_noblur_exact


@dataclass(frozen=True)
class SweepRecord:
    image_id: str
    kernel_id: str
    alpha: float
    lambda_l: float
    f_irls_gt: float
    f_opt_delta: float
    f_irls_delta: float
    ratio: float
    prior_ratio: float
    converged_gt: bool
    converged_delta: bool
    error: str = ""

    @property
    def key(self):
        return (self.image_id, self.kernel_id, self.alpha, self.lambda_l)

    @property
    def ok(self):
        return not self.error


def _failed(image_id, kernel_id, alpha, lam, err):
    nan = float("nan")
    return SweepRecord(image_id, kernel_id, alpha, lam, nan, nan, nan, nan, nan,
                       False, False, f"{type(err).__name__}: {err}")


def sweep_point(b: GradientImage, k_gt, params: EnergyParams, image_id="image",
                kernel_id="gt", bp: BoundaryPolicy | None = None) -> SweepRecord:
    """Evaluate one (alpha, lambda_l) point; all energies share one crop."""
    k_gt = check_kernel(k_gt)
    bp = bp or BoundaryPolicy.for_kernels(k_gt)
    gt = energy(k_gt, b, params, bp)
    opt = energy_noblur_exact(b, params, bp)
    irls_d = energy(delta_kernel(1), b, params, bp)
    if opt.sparsity > 0:
        pr = gt.sparsity / opt.sparsity
    else:
        pr = math.inf if gt.sparsity > 0 else 1.0
    return SweepRecord(image_id, kernel_id, params.alpha, params.lambda_l, gt.total, opt.total,
                       irls_d.total, gt.total / opt.total, pr, gt.converged, irls_d.converged)


def alpha_lambda_grid(b: GradientImage, k_gt, alphas, lambdas, params: EnergyParams | None = None,
                      image_id="image", kernel_id="gt") -> list:
    """One record per (alpha, lambda_l) pair. Ratios are stored unclipped."""
    params = params or EnergyParams()
    if len(alphas) == 0 or len(lambdas) == 0:
        raise ValueError("alpha and lambda grids must be non-empty")
    out = []
    for a in alphas:
        for lam in lambdas:
            p = params.with_(alpha=float(a), lambda_l=float(lam))
            out.append(sweep_point(b, k_gt, p, image_id, kernel_id))
    return sort_records(out)


def lambda_sweep_dataset(dataset, lambdas, alpha: float = 0.1,
                         params: EnergyParams | None = None) -> list:
    """Ratios for every (item, lambda_l).

    ``dataset`` holds ``(b, k_gt)`` or ``(image_id, b, k_gt)`` tuples. A
    failing item is recorded with its error message and NaN energies.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    params = (params or EnergyParams()).with_(alpha=float(alpha))
    out = []
    for i, item in enumerate(dataset):
        if len(item) == 3:
            image_id, b, k = item
        else:
            image_id, (b, k) = f"item{i:03d}", item
        for lam in lambdas:
            p = params.with_(lambda_l=float(lam))
            try:
                out.append(sweep_point(b, k, p, str(image_id), "gt"))
            except (ValueError, FloatingPointError, np.linalg.LinAlgError) as err:
                out.append(_failed(str(image_id), "gt", p.alpha, p.lambda_l, err))
    return sort_records(out)


def sort_records(records) -> list:
    return sorted(records, key=lambda r: r.key)


@dataclass(frozen=True)
class Histogram:
    lambdas: list
    percent: list     # share of images with ratio < 1, in percent
    counts: list      # (successes, total) per lambda
    argmax: float

    @property
    def argmax_index(self):
        return self.lambdas.index(self.argmax)


def ratio_histogram(records) -> Histogram:
    """Percentage of images with ratio < 1 at each lambda_l.

    Failed records are left out. Ties for the maximum go to the smallest lambda.
    """
    records = [r for r in records if r.ok]
    if not records:
        raise ValueError("no records")
    if len({r.alpha for r in records}) != 1:
        raise ValueError("records must share alpha")
    lambdas = sorted({r.lambda_l for r in records})
    percent, counts = [], []
    for lam in lambdas:
        rs = [r for r in records if r.lambda_l == lam]
        hit = sum(r.ratio < 1.0 for r in rs)
        counts.append((hit, len(rs)))
        percent.append(100.0 * hit / len(rs))
    best = lambdas[int(np.argmax(percent))]
    return Histogram(lambdas, percent, counts, best)


@dataclass(frozen=True)
class LengthSweep:
    entries: list       # (length, EnergyBreakdown, kernel)
    baseline: object    # EnergyBreakdown of f^opt(delta)

    @property
    def argmin(self):
        return min(self.entries, key=lambda e: (e[1].total, e[0]))[0]

    def energy_of(self, length):
        for n, e, _ in self.entries:
            if n == length:
                return e
        raise KeyError(length)


def _row_kernel(k, length, horizontal):
    k = np.asarray(k, dtype=float).ravel()
    if k.size != length:
        raise ValueError(f"provided kernel has {k.size} taps, expected {length}")
    return (k[None, :] if horizontal else k[:, None]) / k.sum()


def kernel_length_sweep(b: GradientImage, lengths, params: EnergyParams | None = None,
                        mode: str = "estimate", kernels=None, horizontal=True,
                        iters: int = 10) -> LengthSweep:
    """``f^IRLS`` of the best 1D kernel of each length.

    ``mode="estimate"`` runs the blind alternation at every length starting
    from delta; ``mode="provided"`` evaluates ``kernels[length]`` as given.
    All lengths share the crop of the longest one so energies are comparable.
    """
    from .deconv import blind_deconv_single_scale

    params = params or EnergyParams()
    lengths = [int(n) for n in lengths]
    if not lengths or any(n < 1 or n % 2 == 0 for n in lengths):
        raise ValueError("lengths must be odd and >= 1")
    if mode not in ("estimate", "provided"):
        raise ValueError(f"unknown mode {mode!r}")
    bp = BoundaryPolicy(max(lengths) // 2)
    entries = []
    for n in lengths:
        size = (1, n) if horizontal else (n, 1)
        if n == 1:
            k = delta_kernel(1)
        elif mode == "provided":
            k = _row_kernel(kernels[n], n, horizontal)
        else:
            k, _, _ = blind_deconv_single_scale(b, size, params, iters, bp=bp)
        entries.append((n, energy(k, b, params, bp), k))
    return LengthSweep(entries, energy_noblur_exact(b, params, bp))


CSV_FIELDS = [f.name for f in fields(SweepRecord)]


def _fmt(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def write_csv(records, path_or_file):
    rows = sort_records(records)

    def dump(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in rows:
            d = asdict(r)
            w.writerow([_fmt(d[k]) for k in CSV_FIELDS])

    if hasattr(path_or_file, "write"):
        dump(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            dump(fh)


def read_csv(path_or_file) -> list:
    def load(fh):
        rd = csv.DictReader(fh)
        if rd.fieldnames != CSV_FIELDS:
            raise ValueError(f"unexpected header {rd.fieldnames}")
        out = []
        for row in rd:
            out.append(SweepRecord(
                row["image_id"], row["kernel_id"],
                *(float(row[k]) for k in CSV_FIELDS[2:9]),
                row["converged_gt"] == "1", row["converged_delta"] == "1", row["error"]))
        return out

    if hasattr(path_or_file, "read"):
        return load(path_or_file)
    with open(path_or_file, newline="") as fh:
        return load(fh)


def clip_for_display(ratios, upper=2.0):
    """Presentation-only clipping of ratio maps."""
    return np.minimum(np.asarray(ratios, dtype=float), upper)


def bundled_dataset(n=10, size=64, seed=2024):
    """``(image_id, b, k_gt)`` triples for the bundled synthetic set."""
    from .synthetic import blurred_pair, bundled_set

    return [(name, blurred_pair(img, k)[1], k) for name, img, k in bundled_set(n, size, seed)]
