"""Domain types, the two-branch sparsity penalty, priors and gradient plumbing.

Images are plain 2D float64 numpy arrays in row-major (height, width) order.
Kernels are 2D arrays with odd sides. Gradient fields are carried as a
``GradientImage`` pair so that both channels always travel together.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class GradientImage(NamedTuple):
    """Horizontal and vertical gradient channels of one image."""

    gx: np.ndarray
    gy: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.gx.shape

    @property
    def height(self) -> int:
        return self.gx.shape[0]

    @property
    def width(self) -> int:
        return self.gx.shape[1]

    def channels(self) -> tuple[np.ndarray, np.ndarray]:
        return (self.gx, self.gy)

    def map(self, fn) -> "GradientImage":
        return GradientImage(fn(self.gx), fn(self.gy))

    def __add__(self, other):  # type: ignore[override]
        return GradientImage(self.gx + other.gx, self.gy + other.gy)

    def __sub__(self, other):
        return GradientImage(self.gx - other.gx, self.gy - other.gy)


def make_gradient_image(gx, gy) -> GradientImage:
    gx = np.asarray(gx, dtype=np.float64)
    gy = np.asarray(gy, dtype=np.float64)
    if gx.ndim != 2 or gx.shape != gy.shape:
        raise ValueError(f"gradient channels must be 2D with equal shapes, got {gx.shape} and {gy.shape}")
    if not (np.all(np.isfinite(gx)) and np.all(np.isfinite(gy))):
        raise ValueError("gradient channels contain non-finite values")
    return GradientImage(gx, gy)


@dataclass(frozen=True)
class EnergyParams:
    """Hyperparameters of the energy and controls of its solvers.

    Defaults are the recommended operating point: sparseness ``alpha=0.1``,
    quadratic threshold ``tau=0.01``, latent prior weight ``lambda_l=0.00064``
    and kernel prior weight ``lambda_k=0.001``.
    """

    alpha: float = 0.1
    tau: float = 0.01
    lambda_l: float = 0.00064
    lambda_k: float = 0.001
    irls_iters: int = 8
    cg_tol: float = 1e-5
    cg_max_iters: int = 100
    noblur_grid: int = 2001

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0):
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not self.tau > 0.0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.lambda_l < 0.0 or self.lambda_k < 0.0:
            raise ValueError("prior weights must be non-negative")
        if self.irls_iters < 1:
            raise ValueError("irls_iters must be >= 1")
        if self.cg_max_iters < 1 or not self.cg_tol > 0.0:
            raise ValueError("cg_max_iters must be >= 1 and cg_tol > 0")
        if self.noblur_grid < 3:
            raise ValueError("noblur_grid must be >= 3")

    def with_(self, **changes) -> "EnergyParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class EnergyBreakdown:
    """Value of the kernel energy split into its three terms.

    ``total = data + lambda_l * sparsity + lambda_k * kernel_prior``.
    """

    total: float
    data: float
    sparsity: float
    kernel_prior: float
    converged: bool = True

    @classmethod
    def compose(cls, data, sparsity, kernel_prior, params: EnergyParams, converged=True):
        data, sparsity, kernel_prior = float(data), float(sparsity), float(kernel_prior)
        total = data + params.lambda_l * sparsity + params.lambda_k * kernel_prior
        return cls(total, data, sparsity, kernel_prior, bool(converged))


def phi(x, params: EnergyParams):
    """Per-value penalty: ``|x|**alpha`` above ``tau``, ``tau**(alpha-2) * x**2`` below."""
    ax = np.abs(np.asarray(x, dtype=np.float64))
    alpha, tau = params.alpha, params.tau
    quad = tau ** (alpha - 2.0) * ax * ax
    # max() keeps the power branch finite where it is masked out anyway
    power = np.maximum(ax, tau) ** alpha
    out = np.where(ax >= tau, power, quad)
    return out if out.ndim else float(out)


def sparsity_prior(g: GradientImage, params: EnergyParams) -> float:
    return float(np.sum(phi(g.gx, params)) + np.sum(phi(g.gy, params)))


def kernel_prior(k) -> float:
    k = np.asarray(k, dtype=np.float64)
    return float(np.sum(k * k))


def delta_kernel(height: int = 1, width: int | None = None) -> np.ndarray:
    width = height if width is None else width
    if height % 2 == 0 or width % 2 == 0:
        raise ValueError("kernel sides must be odd")
    k = np.zeros((height, width))
    k[height // 2, width // 2] = 1.0
    return k


def check_kernel(k) -> np.ndarray:
    k = np.asarray(k, dtype=np.float64)
    if k.ndim == 1:
        k = k[None, :]
    if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise ValueError(f"kernel must be 2D with odd sides, got shape {k.shape}")
    if not np.all(np.isfinite(k)):
        raise ValueError("kernel contains non-finite taps")
    return k


def kernel_radius(k) -> int:
    h, w = np.shape(k)
    return max(h // 2, w // 2)


def check_image(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"image must be a non-empty 2D array, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


def to_luminance(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        img = img[..., :3] @ np.asarray(LUMA_WEIGHTS)
    return img


def gradients(img) -> GradientImage:
    """Forward differences; the last column of gx and last row of gy are zero."""
    img = check_image(img)
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, :-1] = img[:, 1:] - img[:, :-1]
    gy[:-1, :] = img[1:, :] - img[:-1, :]
    return GradientImage(gx, gy)


def poisson_reconstruct(g: GradientImage, mean: float = 0.5) -> np.ndarray:
    """Least-squares intensities whose periodic forward differences match ``g``.

    Solved exactly in the Fourier domain; the free constant is fixed by
    setting the image mean to ``mean``.
    """
    h, w = g.shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    # symbols of periodic forward differences
    dx = np.exp(2j * np.pi * fx) - 1.0
    dy = np.exp(2j * np.pi * fy) - 1.0
    num = np.conj(dx) * np.fft.fft2(g.gx) + np.conj(dy) * np.fft.fft2(g.gy)
    den = np.abs(dx) ** 2 + np.abs(dy) ** 2
    den[0, 0] = 1.0
    spec = num / den
    spec[0, 0] = 0.0
    return np.real(np.fft.ifft2(spec)) + mean


def periodic_gradients(img) -> GradientImage:
    """Forward differences with wrap-around; the operator inverted by ``poisson_reconstruct``."""
    img = check_image(img)
    return GradientImage(np.roll(img, -1, axis=1) - img, np.roll(img, -1, axis=0) - img)
