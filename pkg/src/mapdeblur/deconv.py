"""Naive MAP blind deconvolution by alternating the latent and kernel steps.

Every run starts from the delta kernel. There is no edge prediction,
reweighting or parameter continuation: each iteration computes the IRLS
latent estimate for the current kernel and then re-solves the kernel.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .conv import BoundaryPolicy
from .core import EnergyBreakdown, EnergyParams, GradientImage, delta_kernel
from .energy import breakdown_for, energy_with_latent
from .kernel import _size_pair, project_kernel, resize_kernel, solve_kernel

DEFAULT_RATIO = 1.0 / np.sqrt(2.0)
BINOMIAL = np.array([0.25, 0.5, 0.25])


@dataclass(frozen=True)
class TraceRecord:
    level: int
    iteration: int
    energy: EnergyBreakdown       # f^IRLS of the kernel entering this iteration
    after_kstep: EnergyBreakdown  # joint energy of the unprojected k-step solution, same latent
    kernel: np.ndarray = field(repr=False)


@dataclass
class DeconvTrace:
    records: list = field(default_factory=list)

    def append(self, rec: TraceRecord):
        if self.records and self.records[-1].level == rec.level and rec.iteration <= self.records[-1].iteration:
            raise ValueError("iterations must increase within a level")
        self.records.append(rec)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def rows(self):
        for r in self.records:
            yield {
                "level": r.level,
                "iteration": r.iteration,
                "total": r.energy.total,
                "data": r.energy.data,
                "sparsity": r.energy.sparsity,
                "kernel_prior": r.energy.kernel_prior,
                "after_kstep": r.after_kstep.total,
                "converged": int(r.energy.converged),
            }


@dataclass(frozen=True)
class Pyramid:
    levels: list   # coarsest first, finest (the input) last
    ratio: float
    scales: list


def _kstep(k, l: GradientImage, b: GradientImage, params: EnergyParams, bp: BoundaryPolicy):
    """Return ``(raw, projected)``: the exact ridge minimizer and its projection.

    ``raw`` minimizes the joint energy for fixed ``l``, so its energy never
    exceeds that of ``k``. The projected kernel is what the next iteration
    uses; the latent is re-estimated for it from scratch.
    """
    raw = solve_kernel(l, b, k.shape, params.lambda_k, bp)
    return raw, project_kernel(raw)


def blind_deconv_single_scale(b: GradientImage, size, params: EnergyParams | None = None,
                              iters: int = 10, k0=None, bp: BoundaryPolicy | None = None,
                              level: int = 0, trace: DeconvTrace | None = None):
    """Alternate IRLS latent estimation and kernel updates from ``k = delta``.

    Returns ``(kernel, latent, trace)``; ``latent`` is the IRLS estimate for the
    returned kernel.
    """
    params = params or EnergyParams()
    kh, kw = _size_pair(size)
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if not (np.any(b.gx) or np.any(b.gy)):
        raise ValueError("blurred gradients are all zero; nothing to deconvolve")
    bp = BoundaryPolicy(max((bp or BoundaryPolicy()).margin, kh // 2, kw // 2))
    k = delta_kernel(kh, kw) if k0 is None else project_kernel(k0)
    if k.shape != (kh, kw):
        raise ValueError(f"initial kernel {k.shape} does not match size {(kh, kw)}")
    trace = DeconvTrace() if trace is None else trace
    for it in range(iters):
        e, l = energy_with_latent(k, b, params, bp)
        if not (np.any(l.gx) or np.any(l.gy)):
            # prior wiped the latent out; the kernel step has nothing to fit
            trace.append(TraceRecord(level, it, e, e, k.copy()))
            break
        raw, k_new = _kstep(k, l, b, params, bp)
        after = breakdown_for(raw, l, b, params, bp, e.converged)
        trace.append(TraceRecord(level, it, e, after, k_new.copy()))
        k = k_new
    _, l = energy_with_latent(k, b, params, bp)
    return k, l, trace


def _resample_channel(x: np.ndarray, out_shape, scale: float, offset=(0.0, 0.0)):
    h, w = out_shape
    ys = (np.arange(h) + 0.5) / scale - 0.5 + offset[0]
    xs = (np.arange(w) + 0.5) / scale - 0.5 + offset[1]
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return ndimage.map_coordinates(x, [yy, xx], order=1, mode="nearest")


def downsample_gradients(g: GradientImage, ratio: float) -> GradientImage:
    """One pyramid step on gradient channels.

    Binomial pre-filter, centre-aligned bilinear sampling and amplitude
    compensation ``1/ratio`` (a coarse pixel spans ``1/ratio`` fine pixels).
    Each channel is sampled at the position of its own difference stencil.
    """
    h, w = g.shape
    out_shape = (max(1, int(round(h * ratio))), max(1, int(round(w * ratio))))
    shift = 0.5 / ratio - 0.5

    def prefilter(c):
        c = ndimage.correlate1d(c, BINOMIAL, axis=0, mode="nearest")
        return ndimage.correlate1d(c, BINOMIAL, axis=1, mode="nearest")

    gx = _resample_channel(prefilter(g.gx), out_shape, ratio, (0.0, shift)) / ratio
    gy = _resample_channel(prefilter(g.gy), out_shape, ratio, (shift, 0.0)) / ratio
    return GradientImage(gx, gy)


def pyramid_depth(size, ratio: float, min_kernel_taps: int = 3) -> int:
    """Number of levels such that the coarsest kernel still spans ``min_kernel_taps``."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    largest = max(_size_pair(size))
    n = 1
    while largest * ratio ** n >= min_kernel_taps:
        n += 1
    return n


def build_pyramid(b: GradientImage, ratio: float = DEFAULT_RATIO, size=15,
                  min_kernel_taps: int = 3, min_image: int = 16) -> Pyramid:
    """Coarse-to-fine stack of blurred gradients, built on the gradients directly."""
    depth = pyramid_depth(size, ratio, min_kernel_taps)
    levels, scales = [b], [1.0]
    for _ in range(depth - 1):
        nxt = downsample_gradients(levels[-1], ratio)
        if min(nxt.shape) < min_image:
            break
        levels.append(nxt)
        scales.append(scales[-1] * ratio)
    return Pyramid(levels[::-1], ratio, scales[::-1])


def fit_kernel(k, size) -> np.ndarray:
    """Centre-crop or zero-pad a kernel to ``size`` and project it."""
    kh, kw = _size_pair(size)
    h, w = k.shape
    out = np.zeros((kh, kw))
    ch, cw = min(h, kh), min(w, kw)
    out[(kh - ch) // 2:(kh - ch) // 2 + ch, (kw - cw) // 2:(kw - cw) // 2 + cw] = \
        k[(h - ch) // 2:(h - ch) // 2 + ch, (w - cw) // 2:(w - cw) // 2 + cw]
    return project_kernel(out)


def level_size(size, scale: float):
    kh, kw = _size_pair(size)
    if scale == 1.0:
        return kh, kw

    def one(n):
        if n == 1:
            return 1
        return max(3, int(2 * np.round((n * scale - 1) / 2) + 1))

    return one(kh), one(kw)


def blind_deconv_multiscale(b: GradientImage, size, params: EnergyParams | None = None,
                            iters_per_level: int = 10, ratio: float = DEFAULT_RATIO,
                            bp: BoundaryPolicy | None = None, min_kernel_taps: int = 3):
    """Coarse-to-fine blind deconvolution; returns ``(kernel, latent, trace)`` at full scale."""
    params = params or EnergyParams()
    kh, kw = _size_pair(size)
    pyr = build_pyramid(b, ratio, (kh, kw), min_kernel_taps)
    if len(pyr.levels) == 1:
        return blind_deconv_single_scale(b, (kh, kw), params, iters_per_level, bp=bp)
    trace = DeconvTrace()
    k = None
    for i, (g, scale) in enumerate(zip(pyr.levels, pyr.scales)):
        lsize = level_size((kh, kw), scale)
        if k is not None:
            k = fit_kernel(resize_kernel(k, 1.0 / ratio), lsize)
        level_bp = bp if i == len(pyr.levels) - 1 else None
        k, l, trace = blind_deconv_single_scale(g, lsize, params, iters_per_level, k0=k,
                                                bp=level_bp, level=i, trace=trace)
    return k, l, trace
