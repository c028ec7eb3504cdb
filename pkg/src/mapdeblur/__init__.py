"""Gradient-domain kernel energy, naive MAP blind deconvolution and its uses."""
from .core import EnergyBreakdown, EnergyParams, GradientImage, gradients, poisson_reconstruct
from .deconv import blind_deconv_multiscale, blind_deconv_single_scale
from .energy import energy_noblur_exact, energy_ratio, prior_ratio
from .kernel import estimate_kernel, kernel_similarity

__version__ = "0.1.0"
