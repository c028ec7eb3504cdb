"""Convolution, its adjoint and the interior-cropped data term.

Convolution pads with replicated edge values and returns a same-size
channel. Every energy is measured only on the *interior* of the image, i.e.
after discarding ``margin`` rows/columns on each side where ``margin`` is at
least the kernel radius. Interior outputs never touch the padding, so the
adjoint of ``crop(convolve(., k))`` is a zero-padded correlation of the
zero-extended interior residual; that is what ``correlate`` computes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from .core import GradientImage, check_kernel, kernel_radius

SPATIAL_MAX_TAPS = 5


@dataclass(frozen=True)
class BoundaryPolicy:
    """Replicate padding for convolution, energies on an interior crop."""

    margin: int = 0
    mode: str = "replicate-pad-interior-crop"

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        if self.mode != "replicate-pad-interior-crop":
            raise ValueError(f"unsupported boundary mode {self.mode!r}")

    @classmethod
    def for_kernels(cls, *kernels) -> "BoundaryPolicy":
        return cls(max((kernel_radius(check_kernel(k)) for k in kernels), default=0))

    def effective_margin(self, k) -> int:
        return max(self.margin, kernel_radius(k))


def _check_fits(channel: np.ndarray, k: np.ndarray):
    if channel.ndim != 2:
        raise ValueError("channel must be 2D")
    if k.shape[0] > channel.shape[0] or k.shape[1] > channel.shape[1]:
        raise ValueError(f"kernel {k.shape} larger than channel {channel.shape}")


def convolve(channel, k, method: str = "auto") -> np.ndarray:
    """Same-size convolution ``out[p] = sum_q k[q] x[p - q]`` with replicate padding."""
    channel = np.asarray(channel, dtype=np.float64)
    k = check_kernel(k)
    _check_fits(channel, k)
    if method == "auto":
        method = "spatial" if max(k.shape) <= SPATIAL_MAX_TAPS else "fft"
    if method == "spatial":
        return ndimage.convolve(channel, k, mode="nearest")
    if method == "fft":
        ry, rx = k.shape[0] // 2, k.shape[1] // 2
        padded = np.pad(channel, ((ry, ry), (rx, rx)), mode="edge")
        return signal.fftconvolve(padded, k, mode="valid")
    raise ValueError(f"unknown method {method!r}")


def correlate(channel, k, method: str = "auto") -> np.ndarray:
    """Same-size correlation ``out[s] = sum_q k[q] y[s + q]`` with zero padding.

    Adjoint of ``convolve`` on the interior: for ``m >= radius(k)``,
    ``<crop_m(convolve(x, k)), crop_m(y)> == <x, correlate(mask_m(y), k)>``.
    """
    channel = np.asarray(channel, dtype=np.float64)
    k = check_kernel(k)
    _check_fits(channel, k)
    if method == "auto":
        method = "spatial" if max(k.shape) <= SPATIAL_MAX_TAPS else "fft"
    if method == "spatial":
        return ndimage.correlate(channel, k, mode="constant", cval=0.0)
    if method == "fft":
        return signal.fftconvolve(channel, k[::-1, ::-1], mode="same")
    raise ValueError(f"unknown method {method!r}")


def interior(shape, margin: int) -> tuple[slice, slice]:
    h, w = shape
    if 2 * margin >= h or 2 * margin >= w:
        raise ValueError(f"margin {margin} leaves no interior in a {h}x{w} image")
    return (slice(margin, h - margin), slice(margin, w - margin))


def interior_mask(shape, margin: int) -> np.ndarray:
    mask = np.zeros(shape)
    mask[interior(shape, margin)] = 1.0
    return mask


def interior_inner(a, b, margin: int) -> float:
    sl = interior(np.shape(a), margin)
    return float(np.sum(a[sl] * b[sl]))


def residual(k, l: GradientImage, b: GradientImage, margin: int) -> GradientImage:
    """Interior-masked residual ``mask * (k * l - b)`` for both channels."""
    mask = interior_mask(l.shape, margin)
    return GradientImage(
        mask * (convolve(l.gx, k) - b.gx),
        mask * (convolve(l.gy, k) - b.gy),
    )


def data_term(k, l: GradientImage, b: GradientImage, bp: BoundaryPolicy | None = None) -> float:
    """Sum of squared residuals over both channels on the interior crop."""
    k = check_kernel(k)
    if l.shape != b.shape:
        raise ValueError(f"latent {l.shape} and observation {b.shape} differ in size")
    bp = bp or BoundaryPolicy()
    r = residual(k, l, b, bp.effective_margin(k))
    return float(np.sum(r.gx ** 2) + np.sum(r.gy ** 2))
