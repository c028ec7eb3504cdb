"""The kernel (k) step and kernel utilities."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage, signal

from .conv import BoundaryPolicy, interior
from .core import GradientImage, check_kernel, delta_kernel
from .latent import pcg


def _size_pair(size):
    if np.isscalar(size):
        size = (int(size), int(size))
    h, w = (int(s) for s in size)
    if h < 1 or w < 1 or h % 2 == 0 or w % 2 == 0:
        raise ValueError(f"kernel size must be odd in both axes, got {size}")
    return h, w


def design_matrix(channel: np.ndarray, size, margin: int) -> np.ndarray:
    """Rows ``X[p, :]`` such that ``X @ k.ravel() == convolve(channel, k)[p]`` on the interior."""
    kh, kw = _size_pair(size)
    ry, rx = kh // 2, kw // 2
    if margin < max(ry, rx):
        raise ValueError("margin must cover the kernel radius")
    sy, sx = interior(channel.shape, margin)
    win = sliding_window_view(channel, (kh, kw))
    win = win[sy.start - ry:sy.stop - ry, sx.start - rx:sx.stop - rx, ::-1, ::-1]
    return win.reshape(-1, kh * kw)


def normal_equations(l: GradientImage, b: GradientImage, size, margin: int):
    """Gram matrix and right-hand side of the kernel least-squares problem."""
    kh, kw = _size_pair(size)
    sl = interior(b.shape, margin)
    gram = np.zeros((kh * kw, kh * kw))
    rhs = np.zeros(kh * kw)
    for lc, bc in zip(l.channels(), b.channels()):
        x = design_matrix(lc, (kh, kw), margin)
        gram += x.T @ x
        rhs += x.T @ bc[sl].ravel()
    return gram, rhs


def kernel_objective(k, l: GradientImage, b: GradientImage, lambda_k: float, margin: int) -> float:
    """``||crop(k*l - b)||^2 + lambda_k * ||k||^2`` over both channels."""
    k = check_kernel(k)
    sl = interior(b.shape, margin)
    total = 0.0
    for lc, bc in zip(l.channels(), b.channels()):
        r = design_matrix(lc, k.shape, margin) @ k.ravel() - bc[sl].ravel()
        total += float(r @ r)
    return total + lambda_k * float(np.sum(k * k))


def solve_kernel(l: GradientImage, b: GradientImage, size, lambda_k: float,
                 bp: BoundaryPolicy | None = None) -> np.ndarray:
    """Unconstrained ridge least-squares kernel, solved by CG on the normal equations."""
    kh, kw = _size_pair(size)
    if l.shape != b.shape:
        raise ValueError(f"latent {l.shape} and observation {b.shape} differ in size")
    if not (np.any(l.gx) or np.any(l.gy)):
        raise ValueError("latent gradients are all zero; the kernel is not identifiable")
    bp = bp or BoundaryPolicy()
    margin = max(bp.margin, kh // 2, kw // 2)
    gram, rhs = normal_equations(l, b, (kh, kw), margin)
    gram[np.diag_indices_from(gram)] += lambda_k
    n = kh * kw
    res = pcg(lambda v: gram @ v, rhs, np.zeros(n), np.diag(gram).copy(), 1e-12, 20 * n)
    return res.x.reshape(kh, kw)


def estimate_kernel(l: GradientImage, b: GradientImage, size, lambda_k: float = 0.001,
                    bp: BoundaryPolicy | None = None) -> np.ndarray:
    """Kernel step: ridge least squares over the taps, then ``project_kernel``."""
    return project_kernel(solve_kernel(l, b, size, lambda_k, bp))


def project_kernel(k) -> np.ndarray:
    """Clamp negative taps to zero and renormalize; a massless kernel becomes delta."""
    k = check_kernel(k)
    k = np.where(k > 0.0, k, 0.0)
    mass = k.sum()
    if mass <= 0.0:
        return delta_kernel(*k.shape)
    return k / mass


def odd_size(n: float) -> int:
    return int(2 * np.floor(n / 2.0) + 1)


def resize_kernel(k, scale) -> np.ndarray:
    """Centre-aligned bilinear resampling to an odd size, then projection.

    ``scale`` is a scalar or a (vertical, horizontal) pair.
    """
    k = check_kernel(k)
    sy, sx = (scale, scale) if np.isscalar(scale) else scale
    if sy <= 0 or sx <= 0:
        raise ValueError("scale must be positive")
    h, w = k.shape
    nh, nw = odd_size(h * sy), odd_size(w * sx)
    if (nh, nw) == (h, w) and sy == 1 and sx == 1:
        return project_kernel(k)
    ys = (np.arange(nh) - nh // 2) / sy + h // 2
    xs = (np.arange(nw) - nw // 2) / sx + w // 2
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    out = ndimage.map_coordinates(k, [yy, xx], order=1, mode="constant", cval=0.0)
    if out.sum() <= 0.0:
        # sampling grid missed every tap (heavy downscale of a thin kernel)
        out = np.zeros((nh, nw))
        out[nh // 2, nw // 2] = 1.0
    return project_kernel(out)


def kernel_similarity(k1, k2) -> float:
    """Maximum normalized cross-correlation over all integer translations."""
    a = np.asarray(k1, dtype=np.float64)
    b = np.asarray(k2, dtype=np.float64)
    a = a[None, :] if a.ndim == 1 else a
    b = b[None, :] if b.ndim == 1 else b
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    xc = signal.correlate(a, b, mode="full", method="direct")
    return float(np.clip(xc.max() / (na * nb), -1.0, 1.0))
