"""Using the kernel energy as a quality score.

Three uses: picking a kernel size, ranking light-streak patches as kernel
candidates, and estimating a spatially varying defocus map from edges.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage, sparse
from scipy.sparse import linalg as splinalg

from .conv import BoundaryPolicy
from .core import EnergyParams, GradientImage, check_image, gradients
from .deconv import DEFAULT_RATIO, blind_deconv_multiscale
from .energy import energy
from .kernel import project_kernel
from .synthetic import disk_kernel


# ---- kernel size selection ----

@dataclass(frozen=True)
class SizeResult:
    best: int
    energies: dict               # size -> EnergyBreakdown
    kernels: dict                # size -> estimated kernel
    errors: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)


def select_kernel_size(b: GradientImage, sizes, params: EnergyParams | None = None,
                       iters_per_level: int = 10, ratio: float = DEFAULT_RATIO) -> SizeResult:
    """Estimate a kernel at every size and keep the one with the lowest energy.

    Energies are compared on the crop of the largest size. Ties go to the
    smaller size.
    """
    params = params or EnergyParams()
    sizes = sorted({int(s) for s in sizes})
    if not sizes:
        raise ValueError("no candidate sizes")
    if any(s < 1 or s % 2 == 0 for s in sizes):
        raise ValueError("sizes must be odd and >= 1")
    bp = BoundaryPolicy(max(sizes) // 2)
    energies, kernels, errors, traces = {}, {}, {}, {}
    for s in sizes:
        try:
            if s == 1:
                k = np.ones((1, 1))
            else:
                k, _, traces[s] = blind_deconv_multiscale(b, s, params, iters_per_level, ratio, bp=bp)
            kernels[s] = k
            energies[s] = energy(k, b, params, bp)
        except (ValueError, np.linalg.LinAlgError) as err:
            errors[s] = f"{type(err).__name__}: {err}"
    if not energies:
        raise ValueError(f"every candidate size failed: {errors}")
    best = min(energies, key=lambda s: (energies[s].total, s))
    return SizeResult(best, energies, kernels, errors, traces)


# ---- light streaks ----

def patch_to_kernel(patch):
    """Background-subtract, clamp and normalize an intensity patch.

    Even sides get a zero row or column appended so the kernel has a centre.
    Returns None when nothing is left after background removal.
    """
    p = check_image(patch)
    p = np.clip(p - p.min(), 0.0, None)
    if not p.sum() > 0:
        return None
    h, w = p.shape
    p = np.pad(p, ((0, 1 - h % 2), (0, 1 - w % 2)))
    return project_kernel(p)


@dataclass(frozen=True)
class RankedPatch:
    patch_id: object
    energy: object        # EnergyBreakdown, None when excluded
    kernel: np.ndarray = field(repr=False, default=None)
    excluded: bool = False


def rank_light_streak_patches(b: GradientImage, patches, params: EnergyParams | None = None,
                              crop=None) -> list:
    """Rank candidate patches by the energy of the kernel each one implies.

    ``patches`` is a list of arrays or a dict id -> array. ``crop`` is an
    optional pair of slices applied to ``b`` to speed up evaluation. Patches
    with no mass are returned last, flagged ``excluded``.
    """
    params = params or EnergyParams()
    items = list(patches.items()) if isinstance(patches, dict) else list(enumerate(patches))
    if crop is not None:
        b = GradientImage(b.gx[crop], b.gy[crop])
    kernels = [(pid, patch_to_kernel(p)) for pid, p in items]
    valid = [k for _, k in kernels if k is not None]
    bp = BoundaryPolicy.for_kernels(*valid) if valid else BoundaryPolicy()
    ranked, excluded = [], []
    for pid, k in kernels:
        if k is None:
            excluded.append(RankedPatch(pid, None, None, True))
        else:
            ranked.append(RankedPatch(pid, energy(k, b, params, bp), k))
    order = {pid: i for i, (pid, _) in enumerate(items)}
    ranked.sort(key=lambda r: (r.energy.total, order[r.patch_id]))
    return ranked + excluded


# ---- edges ----

def _gaussian_5x5(sigma=1.4):
    t = np.arange(-2, 3)
    g = np.exp(-t ** 2 / (2 * sigma ** 2))
    g2 = np.outer(g, g)
    return g2 / g2.sum()


def canny_edges(img, low=0.01, high=0.03, sigma=1.4) -> np.ndarray:
    """Canny edge mask.

    Thresholds apply to the Sobel magnitude scaled to intensity change per
    pixel, so a unit step after smoothing peaks near 0.4.
    """
    if not 0 <= low <= high:
        raise ValueError("need 0 <= low <= high")
    img = check_image(img)
    s = ndimage.convolve(img, _gaussian_5x5(sigma), mode="nearest")
    gx = ndimage.sobel(s, axis=1, mode="nearest") / 8.0
    gy = ndimage.sobel(s, axis=0, mode="nearest") / 8.0
    mag = np.hypot(gx, gy)

    # quantize the gradient direction to 0, 45, 90, 135 degrees
    ang = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    sector = (np.floor((ang + 22.5) / 45.0).astype(int)) % 4
    offsets = [(0, 1), (1, 1), (1, 0), (1, -1)]
    pad = np.pad(mag, 1, mode="constant")
    h, w = mag.shape
    keep = np.zeros_like(mag, dtype=bool)
    for d, (dy, dx) in enumerate(offsets):
        fwd = pad[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        bwd = pad[1 - dy:1 - dy + h, 1 - dx:1 - dx + w]
        # ties on a flat ridge keep only the pixel on the backward side
        keep |= (sector == d) & (mag >= fwd) & (mag > bwd)
    nms = np.where(keep, mag, 0.0)

    weak = nms >= low if low > 0 else nms > 0
    strong = (nms >= high) & weak
    labels, n = ndimage.label(weak, structure=np.ones((3, 3)))
    if n == 0:
        return np.zeros_like(weak)
    hit = np.zeros(n + 1, dtype=bool)
    hit[np.unique(labels[strong])] = True
    hit[0] = False
    return hit[labels]


# ---- defocus ----

@dataclass(frozen=True)
class DefocusParams:
    radii: tuple = (0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    window: int = 41
    canny_low: float = 0.01
    canny_high: float = 0.03
    prop_lambda: float = 0.05
    ml_window: int = 3
    ml_epsilon: float = 1e-5
    edge_stride: int = 1     # evaluate every n-th edge pixel in raster order

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        if r.size == 0 or np.any(r < 0) or np.any(np.diff(r) <= 0):
            raise ValueError("radii must be non-empty, non-negative and increasing")
        if self.window % 2 == 0 or self.window <= 2 * r.max():
            raise ValueError("window must be odd and larger than twice the largest radius")
        if self.ml_window % 2 == 0 or self.ml_window < 3:
            raise ValueError("ml_window must be odd and >= 3")
        if self.prop_lambda <= 0 or self.ml_epsilon <= 0:
            raise ValueError("prop_lambda and ml_epsilon must be positive")
        if self.edge_stride < 1:
            raise ValueError("edge_stride must be >= 1")


@dataclass(frozen=True)
class SparseDefocusMap:
    shape: tuple
    rows: np.ndarray
    cols: np.ndarray
    radius: np.ndarray
    energy: np.ndarray
    skipped: np.ndarray       # (n, 2) edge pixels whose window left the image
    edges: np.ndarray = field(repr=False, default=None)

    def __len__(self):
        return len(self.rows)

    def dense(self, fill=np.nan):
        out = np.full(self.shape, fill)
        out[self.rows, self.cols] = self.radius
        return out


def estimate_defocus_sparse(img, dp: DefocusParams | None = None,
                            params: EnergyParams | None = None, edges=None) -> SparseDefocusMap:
    """Per edge pixel, the disk radius whose kernel energy is lowest on the local window."""
    dp = dp or DefocusParams()
    params = params or EnergyParams()
    img = check_image(img)
    if edges is None:
        edges = canny_edges(img, dp.canny_low, dp.canny_high)
    h, w = img.shape
    half = dp.window // 2
    kernels = [disk_kernel(r) for r in dp.radii]
    bp = BoundaryPolicy.for_kernels(*kernels)
    ys, xs = np.nonzero(edges)
    ys, xs = ys[::dp.edge_stride], xs[::dp.edge_stride]
    rows, cols, rad, ens, skipped = [], [], [], [], []
    for y, x in zip(ys, xs):
        if y < half or x < half or y + half >= h or x + half >= w:
            skipped.append((y, x))
            continue
        g = gradients(img[y - half:y + half + 1, x - half:x + half + 1])
        vals = [energy(k, g, params, bp).total for k in kernels]
        i = int(np.argmin(vals))      # first minimum = smallest radius on ties
        rows.append(y)
        cols.append(x)
        rad.append(dp.radii[i])
        ens.append(vals[i])
    return SparseDefocusMap(img.shape, np.array(rows, dtype=int), np.array(cols, dtype=int),
                            np.array(rad, dtype=float), np.array(ens, dtype=float),
                            np.array(skipped, dtype=int).reshape(-1, 2), edges)


def matting_laplacian(guide, window: int = 3, epsilon: float = 1e-5) -> sparse.csr_matrix:
    """Grayscale matting Laplacian over all windows fully inside the image."""
    guide = check_image(guide)
    h, w = guide.shape
    n = window * window
    if h < window or w < window:
        raise ValueError("guide smaller than the matting window")
    idx = np.arange(h * w).reshape(h, w)
    win_idx = sliding_window_view(idx, (window, window)).reshape(-1, n)
    win_val = sliding_window_view(guide, (window, window)).reshape(-1, n)
    mu = win_val.mean(axis=1, keepdims=True)
    var = win_val.var(axis=1, keepdims=True)
    d = win_val - mu
    local = (1.0 + d[:, :, None] * d[:, None, :] / (var[:, :, None] + epsilon / n)) / n
    local = np.eye(n)[None] - local
    ii = np.repeat(win_idx, n, axis=1).ravel()
    jj = np.tile(win_idx, (1, n)).ravel()
    return sparse.csr_matrix((local.ravel(), (ii, jj)), shape=(h * w, h * w))


def propagate_defocus(sm: SparseDefocusMap, guide, dp: DefocusParams | None = None) -> np.ndarray:
    """Spread the sparse radii over the image, edge-aware, with the matting Laplacian."""
    dp = dp or DefocusParams()
    if len(sm) == 0:
        raise ValueError("sparse defocus map is empty")
    guide = check_image(guide)
    h, w = guide.shape
    lap = matting_laplacian(guide, dp.ml_window, dp.ml_epsilon)
    mask = np.zeros(h * w)
    target = np.zeros(h * w)
    flat = sm.rows * w + sm.cols
    mask[flat] = 1.0
    target[flat] = sm.radius
    a = (lap + dp.prop_lambda * sparse.diags(mask)).tocsc()
    d = splinalg.spsolve(a, dp.prop_lambda * mask * target)
    if not np.all(np.isfinite(d)):
        raise np.linalg.LinAlgError("propagation system is singular")
    return np.clip(d.reshape(h, w), min(dp.radii), max(dp.radii))


def snap_to_radii(dense, radii):
    """Nearest candidate radius per pixel."""
    radii = np.asarray(radii, dtype=float)
    return radii[np.argmin(np.abs(dense[..., None] - radii), axis=-1)]
