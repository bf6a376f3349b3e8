"""Density estimation on [0, 1] with beta mixtures under the h-lifted KL divergence."""

from .densities import ComponentParams, DensityHandle, beta_pdf, sample
from .divergence import DivergenceReport, distances, empirical_klh_objective, klh
from .mixture import MixtureParams, mixture_pdf, parse_density, renormalize_weights
from .numerics import QuadratureSpec, digamma, integrate, log_gamma, trigamma

__version__ = "0.1.0"

__all__ = [
    "ComponentParams", "DensityHandle", "DivergenceReport", "MixtureParams", "QuadratureSpec",
    "beta_pdf", "digamma", "distances", "empirical_klh_objective", "integrate", "klh", "log_gamma",
    "mixture_pdf", "parse_density", "renormalize_weights", "sample", "trigamma",
]
