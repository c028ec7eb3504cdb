"""The latent (l) step: IRLS for a general kernel and the exact no-blur solver."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .conv import BoundaryPolicy, convolve, correlate, interior_mask
from .core import EnergyParams, GradientImage, check_kernel, phi


class LatentEstimate(NamedTuple):
    latent: GradientImage
    converged: bool
    cg_iters: int


class CGResult(NamedTuple):
    x: np.ndarray
    converged: bool
    iters: int
    objective: list


def pcg(apply_a, rhs, x0, diag, tol, max_iters) -> CGResult:
    """Jacobi-preconditioned conjugate gradients for an SPD operator.

    Stops when ``||r|| <= tol * ||rhs||`` (``||r0||`` stands in for a zero
    right-hand side). The quadratic ``x'Ax/2 - x'rhs`` is
    recorded after every iterate; it never increases for an SPD operator.
    """
    inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)
    x = x0.copy()
    ax = apply_a(x)
    r = rhs - ax
    objective = [0.5 * float(np.vdot(x, ax)) - float(np.vdot(x, rhs))]
    ref = np.linalg.norm(rhs)
    target = tol * (ref if ref > 0 else np.linalg.norm(r))
    if np.linalg.norm(r) <= target:
        return CGResult(x, True, 0, objective)
    z = inv_diag * r
    p = z.copy()
    rz = float(np.vdot(r, z))
    for it in range(1, max_iters + 1):
        ap = apply_a(p)
        pap = float(np.vdot(p, ap))
        if pap <= 0.0:
            return CGResult(x, False, it - 1, objective)
        step = rz / pap
        x += step * p
        ax += step * ap
        r -= step * ap
        objective.append(0.5 * float(np.vdot(x, ax)) - float(np.vdot(x, rhs)))
        if np.linalg.norm(r) <= target:
            return CGResult(x, True, it, objective)
        z = inv_diag * r
        rz_new = float(np.vdot(r, z))
        if rz_new == 0.0:
            return CGResult(x, True, it, objective)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return CGResult(x, False, max_iters, objective)


def irls_weights(l, params: EnergyParams) -> np.ndarray:
    """Weights making ``w * l**2`` equal ``phi(l)`` at the current iterate."""
    return np.maximum(np.abs(l), params.tau) ** (params.alpha - 2.0)


def latent_objective(k, l: np.ndarray, b: np.ndarray, params: EnergyParams, margin: int) -> float:
    """Single-channel ``||crop(k*l - b)||^2 + lambda_l * sum(phi(l))``."""
    mask = interior_mask(l.shape, margin)
    r = mask * (convolve(l, k) - b)
    return float(np.sum(r * r) + params.lambda_l * np.sum(phi(l, params)))


def _irls_channel(k, b, params: EnergyParams, margin: int):
    mask = interior_mask(b.shape, margin)
    rhs = correlate(mask * b, k)
    data_diag = correlate(mask, k * k)
    lam = params.lambda_l

    l = b.copy()
    best_l, best_f = l, latent_objective(k, l, b, params, margin)
    converged, iters = True, 0
    for _ in range(params.irls_iters):
        w = lam * irls_weights(l, params)

        def apply_a(x, w=w):
            return correlate(mask * convolve(x, k), k) + w * x

        res = pcg(apply_a, rhs, l, data_diag + w, params.cg_tol, params.cg_max_iters)
        converged &= res.converged
        iters += res.iters
        l = res.x
        f = latent_objective(k, l, b, params, margin)
        if f < best_f:
            best_l, best_f = l, f
    return best_l, converged, iters


def irls_latent(k, b: GradientImage, params: EnergyParams | None = None,
                bp: BoundaryPolicy | None = None) -> LatentEstimate:
    """Approximate ``argmin_l ||k*l - b||^2 + lambda_l * rho_l(l)`` by IRLS.

    Starts from ``l = b``; each channel is solved independently. The iterate
    with the lowest true objective is returned, so the result is never worse
    than the initializer. ``converged`` is False if any inner CG solve hit
    ``cg_max_iters`` before reaching ``cg_tol``.
    """
    params = params or EnergyParams()
    k = check_kernel(k)
    bp = bp or BoundaryPolicy()
    margin = bp.effective_margin(k)
    lx, cx, ix = _irls_channel(k, b.gx, params, margin)
    ly, cy, iy = _irls_channel(k, b.gy, params, margin)
    return LatentEstimate(GradientImage(lx, ly), cx and cy, ix + iy)


def _pixel_objective(l, b, params: EnergyParams):
    return (l - b) ** 2 + params.lambda_l * phi(l, params)


def _newton_polish(l, b, params: EnergyParams, steps: int = 6):
    """Newton steps on the stationarity condition of the power branch."""
    a, lam, tau = params.alpha, params.lambda_l, params.tau
    for _ in range(steps):
        al = np.maximum(np.abs(l), tau)
        grad = 2.0 * (l - b) + lam * a * al ** (a - 1.0) * np.sign(l)
        hess = 2.0 + lam * a * (a - 1.0) * al ** (a - 2.0)
        ok = hess > 0
        l = np.where(ok, l - grad / np.where(ok, hess, 1.0), l)
    return l


def _shrink_array(b: np.ndarray, params: EnergyParams, chunk: int = 4096) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    flat = b.ravel()
    out = np.empty_like(flat)
    if params.lambda_l == 0.0:
        return b.copy()
    n = params.noblur_grid
    unit = np.linspace(-1.0, 1.0, n)
    step = unit[1] - unit[0]
    quad_scale = 1.0 / (1.0 + params.lambda_l * params.tau ** (params.alpha - 2.0))
    for start in range(0, flat.size, chunk):
        bc = flat[start:start + chunk]
        radius = np.maximum(1.0, 2.0 * np.abs(bc))
        cand = radius[:, None] * unit[None, :]
        obj = _pixel_objective(cand, bc[:, None], params)
        j = np.clip(np.argmin(obj, axis=1), 1, n - 2)
        rows = np.arange(bc.size)
        f0, f1, f2 = obj[rows, j - 1], obj[rows, j], obj[rows, j + 1]
        best = cand[rows, np.argmin(obj, axis=1)]
        # parabolic vertex through the three samples around the grid minimum
        denom = f0 - 2.0 * f1 + f2
        shift = np.where(denom > 0, 0.5 * (f0 - f2) / np.where(denom > 0, denom, 1.0), 0.0)
        shift = np.clip(shift, -1.0, 1.0)
        para = cand[rows, j] + shift * step * radius
        candidates = [best, para, _newton_polish(para, bc, params), quad_scale * bc, np.zeros_like(bc)]
        vals = np.stack([_pixel_objective(c, bc, params) for c in candidates])
        pick = np.argmin(vals, axis=0)
        out[start:start + chunk] = np.stack(candidates)[pick, rows]
    return out.reshape(b.shape)


def scalar_shrink(value: float, params: EnergyParams | None = None) -> float:
    """Global minimizer of ``(l - value)**2 + lambda_l * phi(l)``."""
    params = params or EnergyParams()
    return float(_shrink_array(np.array([value]), params)[0])


def exact_noblur_latent(b: GradientImage, params: EnergyParams | None = None,
                        bp: BoundaryPolicy | None = None) -> GradientImage:
    """Exact latent gradients for ``k = delta``, solved pixel by pixel.

    Pixels outside the interior crop carry no data term, so their optimum is 0.
    """
    params = params or EnergyParams()
    bp = bp or BoundaryPolicy()
    mask = interior_mask(b.shape, bp.margin)
    return GradientImage(mask * _shrink_array(b.gx, params), mask * _shrink_array(b.gy, params))
