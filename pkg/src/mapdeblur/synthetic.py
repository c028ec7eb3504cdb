"""Deterministic synthetic images and kernels for experiments and tests.

Images are piecewise-constant compositions of rectangles and discs with a
low-amplitude texture layer, so that small prior weights see natural-image
like gradient variance in flat regions. Every generator takes an explicit
seed; nothing here touches global random state.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .conv import convolve
from .core import gradients


def step_image(size=64, seed=0, n_shapes=10, texture=0.04, texture_sigma=0.7):
    rng = np.random.default_rng(seed)
    h, w = (size, size) if np.isscalar(size) else size
    img = np.full((h, w), rng.uniform(0.3, 0.7))
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(n_shapes):
        value = rng.uniform(0.0, 1.0)
        if rng.random() < 0.5:
            y0, x0 = rng.integers(0, h - 4), rng.integers(0, w - 4)
            y1 = rng.integers(y0 + 4, min(h, y0 + h // 2) + 1)
            x1 = rng.integers(x0 + 4, min(w, x0 + w // 2) + 1)
            img[y0:y1, x0:x1] = value
        else:
            cy, cx = rng.uniform(0, h), rng.uniform(0, w)
            r = rng.uniform(4, min(h, w) / 4)
            img[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = value
    if texture > 0:
        noise = ndimage.gaussian_filter(rng.standard_normal((h, w)), texture_sigma)
        noise /= max(noise.std(), 1e-12)
        img = img + texture * noise
    return img


def flat_image(size=64, seed=0, texture=0.04, texture_sigma=0.7):
    """Nearly edge-free image: a gentle ramp plus texture."""
    rng = np.random.default_rng(seed)
    h, w = (size, size) if np.isscalar(size) else size
    yy, xx = np.mgrid[0:h, 0:w]
    img = 0.5 + 0.1 * (xx / w - 0.5) + 0.05 * (yy / h - 0.5)
    noise = ndimage.gaussian_filter(rng.standard_normal((h, w)), texture_sigma)
    noise /= max(noise.std(), 1e-12)
    return img + texture * noise


def box_kernel_1d(length: int, horizontal=True):
    k = np.full((1, length), 1.0 / length)
    return k if horizontal else k.T


def pad_kernel(k, size):
    """Zero-pad a kernel to ``size`` (odd, possibly a (h, w) pair), centred."""
    sh, sw = (size, size) if np.isscalar(size) else size
    h, w = k.shape
    if sh < h or sw < w:
        raise ValueError("target size smaller than kernel")
    out = np.zeros((sh, sw))
    y0, x0 = (sh - h) // 2, (sw - w) // 2
    out[y0:y0 + h, x0:x0 + w] = k
    return out


def motion_kernel(size=15, seed=0, n_points=6, thickness=0.6, fill=0.8):
    """Random smooth camera-shake trajectory rendered into a normalized kernel.

    ``fill`` is the largest excursion from the centre as a fraction of the
    half size; 1.0 makes the trajectory touch the border.
    """
    rng = np.random.default_rng(seed)
    c = size // 2
    steps = rng.standard_normal((n_points, 2))
    steps = ndimage.gaussian_filter1d(steps, 1.0, axis=0)
    path = np.cumsum(steps, axis=0)
    path -= path.mean(axis=0)
    span = np.abs(path).max()
    path *= (fill * c) / max(span, 1e-12)
    t = np.linspace(0, n_points - 1, 40 * n_points)
    py = np.interp(t, np.arange(n_points), path[:, 0]) + c
    px = np.interp(t, np.arange(n_points), path[:, 1]) + c
    k = np.zeros((size, size))
    np.add.at(k, (np.clip(np.round(py).astype(int), 0, size - 1),
                  np.clip(np.round(px).astype(int), 0, size - 1)), 1.0)
    if thickness > 0:
        k = ndimage.gaussian_filter(k, thickness)
    return k / k.sum()


def disk_kernel(radius: float, supersample: int = 8):
    """Anti-aliased normalized disc; radius 0 gives the 1x1 delta."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if radius == 0:
        return np.ones((1, 1))
    half = max(0, int(np.ceil(radius - 0.5)))
    n = 2 * half + 1
    offs = (np.arange(supersample) + 0.5) / supersample - 0.5
    coords = np.arange(n) - half
    sy = (coords[:, None] + offs[None, :]).ravel()
    inside = (sy[:, None] ** 2 + sy[None, :] ** 2) <= radius * radius
    cover = inside.reshape(n, supersample, n, supersample).mean(axis=(1, 3))
    return cover / cover.sum()


def blurred_pair(img, k):
    """Return ``(sharp gradients, blurred gradients)`` for an intensity image."""
    return gradients(img), gradients(convolve(img, k))


def bundled_set(n=10, size=64, seed=2024):
    """The bundled evaluation set: step-rich images, each blurred by a known kernel.

    Kernels alternate between 1D boxes and 2D trajectories with radius <= 3
    so each 64x64 image keeps a large interior.
    """
    items = []
    for i in range(n):
        img = step_image(size, seed=seed + i)
        if i % 2 == 0:
            k = box_kernel_1d(7, horizontal=(i % 4 == 0))
        else:
            k = motion_kernel(7, seed=seed + 100 + i)
        items.append((f"img{i:02d}", img, k))
    return items


def _two_level(shape, seed, n_shapes, lo, hi):
    img = step_image(shape, seed=seed, n_shapes=n_shapes, texture=0.0)
    return np.where(img > np.median(img), hi, lo)


def two_region_defocus(size=(128, 256), radii=(0.0, 4.0), seed=0, n_shapes=20):
    """Two side-by-side objects, the left blurred by ``radii[0]``, the right by ``radii[1]``.

    Each half is a two-level shape pattern and the halves use disjoint
    intensity ranges, so the region boundary is an image edge as well.
    The left layer occludes the right one along the seam.
    Returns ``(image, truth)`` with ``truth`` the per-pixel radius.
    """
    h, w = (size, size) if np.isscalar(size) else size
    fg = _two_level((h, w), seed, n_shapes, 0.05, 0.45)
    bg = _two_level((h, w), seed + 1, n_shapes, 0.55, 0.95)
    right = np.zeros((h, w), dtype=bool)
    right[:, w // 2:] = True
    # layered scene: each layer is blurred on its own, so the occluding
    # contour between them stays as sharp as the left layer
    img = np.where(right, convolve(bg, disk_kernel(radii[1])), convolve(fg, disk_kernel(radii[0])))
    truth = np.where(right, float(radii[1]), float(radii[0]))
    return img, truth
