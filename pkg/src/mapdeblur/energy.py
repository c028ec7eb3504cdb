"""The kernel energy ``f(k)`` with the latent image minimized out.

``f(k) = ||k * l_k - b||^2 + lambda_l * rho_l(l_k) + lambda_k * ||k||^2`` where
``l_k`` is the IRLS latent estimate for ``k``. For the delta kernel the latent
problem separates per pixel, so its exact value is also available and serves
as the reference every other kernel has to beat.
"""
from __future__ import annotations

from .conv import BoundaryPolicy, data_term
from .core import (EnergyBreakdown, EnergyParams, GradientImage, check_kernel,
                   delta_kernel, kernel_prior, sparsity_prior)
from .latent import exact_noblur_latent, irls_latent


def breakdown_for(k, l: GradientImage, b: GradientImage, params: EnergyParams,
                  bp: BoundaryPolicy, converged: bool = True) -> EnergyBreakdown:
    """Energy terms of a given (kernel, latent) pair."""
    return EnergyBreakdown.compose(
        data_term(k, l, b, bp), sparsity_prior(l, params), kernel_prior(k), params, converged)


def energy_with_latent(k, b: GradientImage, params: EnergyParams | None = None,
                       bp: BoundaryPolicy | None = None):
    """Return ``(EnergyBreakdown, latent)`` for the IRLS estimate of ``k``."""
    params = params or EnergyParams()
    k = check_kernel(k)
    bp = bp or BoundaryPolicy.for_kernels(k)
    est = irls_latent(k, b, params, bp)
    return breakdown_for(k, est.latent, b, params, bp, est.converged), est.latent


def energy(k, b: GradientImage, params: EnergyParams | None = None,
           bp: BoundaryPolicy | None = None) -> EnergyBreakdown:
    """Approximate energy ``f^IRLS(k)``."""
    return energy_with_latent(k, b, params, bp)[0]


def energy_noblur_exact(b: GradientImage, params: EnergyParams | None = None,
                        bp: BoundaryPolicy | None = None) -> EnergyBreakdown:
    """Exact energy ``f^opt(delta)`` from the per-pixel solver."""
    params = params or EnergyParams()
    bp = bp or BoundaryPolicy()
    l = exact_noblur_latent(b, params, bp)
    return breakdown_for(delta_kernel(1), l, b, params, bp)


def _comparison_policy(k, bp):
    return bp or BoundaryPolicy.for_kernels(k)


def energy_ratio(k, b: GradientImage, params: EnergyParams | None = None,
                 bp: BoundaryPolicy | None = None) -> float:
    """``f^IRLS(k) / f^opt(delta)``; below 1 means ``k`` beats the no-blur solution."""
    params = params or EnergyParams()
    bp = _comparison_policy(k, bp)
    return energy(k, b, params, bp).total / energy_noblur_exact(b, params, bp).total


def prior_ratio(k, b: GradientImage, params: EnergyParams | None = None,
                bp: BoundaryPolicy | None = None) -> float:
    """``rho_l(l_k) / rho_l(l_delta^opt)``."""
    params = params or EnergyParams()
    bp = _comparison_policy(k, bp)
    return energy(k, b, params, bp).sparsity / energy_noblur_exact(b, params, bp).sparsity
