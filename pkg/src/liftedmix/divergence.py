"""The h-lifted KL divergence, its empirical counterpart and companion distances.

``KL_h(f || g) = int (f + h) log((f + h) / (g + h))``. The empirical
objective returned by :func:`empirical_klh_objective` is the two-sample
lifted log-likelihood ``L_{h,n}``; the sample divergence differs from
``-L_{h,n}`` only by terms that do not depend on the fitted mixture, so every
optimiser in this package works with ``L_{h,n}`` directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .densities import DensityHandle
from .mixture import MixtureParams, mixture_pdf
from .numerics import DomainError, QuadratureSpec, digamma, endpoint_grading, integrate, log_gamma

_TINY = 1e-300
_ROUNDOFF = 1e-10


@dataclass(frozen=True)
class DivergenceReport:
    klh: float
    l1: float
    l2_sq: float
    tv: float


def merged_spec(spec: QuadratureSpec, *densities: DensityHandle) -> QuadratureSpec:
    return spec.with_breakpoints(*(d.breakpoints for d in densities))


def _xlogy_ratio(t, u):
    """t * log(t / u), with 0 where t vanishes."""
    safe_t = np.where(t < _TINY, 1.0, t)
    return np.where(t < _TINY, 0.0, t * (np.log(safe_t) - np.log(u)))


def klh(f: DensityHandle, g: DensityHandle, h: DensityHandle, spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Population h-lifted KL divergence by composite quadrature."""
    if f is g:
        return 0.0
    s = merged_spec(spec, f, g, h)

    def integrand(x):
        hx = h(x)
        return _xlogy_ratio(f(x) + hx, g(x) + hx)

    value = integrate(integrand, s)
    if -_ROUNDOFF < value < 0.0:
        return 0.0
    return value


def lifted_cross_entropy(f: DensityHandle, g: DensityHandle, h: DensityHandle,
                         spec: QuadratureSpec = QuadratureSpec()) -> float:
    """``-int (f + h) log(g + h)``: the negative log h-lifted likelihood of g against f."""
    s = merged_spec(spec, f, g, h)

    def integrand(x):
        hx = h(x)
        return -(f(x) + hx) * np.log(g(x) + hx)

    return integrate(integrand, s)


def lifted_entropy_constant(f: DensityHandle, h: DensityHandle, spec: QuadratureSpec = QuadratureSpec()) -> float:
    """``int (f + h) log(f + h)``, so that KL_h(f || g) = constant + cross entropy."""
    s = merged_spec(spec, f, h)

    def integrand(x):
        t = f(x) + h(x)
        return _xlogy_ratio(t, 1.0)

    return integrate(integrand, s)


def kl(f: DensityHandle, g: DensityHandle, spec: QuadratureSpec = QuadratureSpec(), graded: bool = True) -> float:
    """Ordinary KL divergence by quadrature (diagnostic; may be huge or infinite)."""
    s = merged_spec(spec, f, g)
    if graded:
        s = s.with_breakpoints(endpoint_grading())

    def integrand(x):
        return _xlogy_ratio(f(x), g(x))

    return integrate(integrand, s)


def distances(f: DensityHandle, g: DensityHandle, spec: QuadratureSpec = QuadratureSpec()) -> tuple[float, float, float]:
    """Return ``(l1, l2_sq, tv)``."""
    if f is g:
        return 0.0, 0.0, 0.0
    s = merged_spec(spec, f, g)
    l1 = integrate(lambda x: np.abs(f(x) - g(x)), s)
    l2_sq = integrate(lambda x: (f(x) - g(x)) ** 2, s)
    return l1, l2_sq, l1 / 2.0


def divergence_report(f: DensityHandle, g: DensityHandle, h: DensityHandle,
                      spec: QuadratureSpec = QuadratureSpec()) -> DivergenceReport:
    l1, l2_sq, tv = distances(f, g, spec)
    return DivergenceReport(klh=klh(f, g, h, spec), l1=l1, l2_sq=l2_sq, tv=tv)


def empirical_klh_objective(psi: MixtureParams, h: DensityHandle, xs: Sequence[float], ys: Sequence[float]) -> float:
    """Two-sample lifted log-likelihood ``L_{h,n}(psi)``.

    ``(1/n) sum_i [log(f_psi(X_i) + h(X_i)) + log(f_psi(Y_i) + h(Y_i))]``.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size == 0 or xs.shape != ys.shape:
        raise ValueError("xs and ys must be non-empty and of equal length")
    with np.errstate(divide="ignore"):
        lx = np.log(mixture_pdf(xs, psi) + h(xs))
        ly = np.log(mixture_pdf(ys, psi) + h(ys))
    total = lx + ly
    if not np.all(np.isfinite(total)):
        raise FloatingPointError("lifted likelihood is not finite at some sample point")
    return float(np.mean(total))


def beta_kl_closed_form(theta_p, theta_q) -> float:
    """KL(Beta(a_p, b_p) || Beta(a_q, b_q)) in closed form via digamma."""
    ap, bp = (float(v) for v in theta_p)
    aq, bq = (float(v) for v in theta_q)
    if min(ap, bp, aq, bq) <= 0.0:
        raise DomainError("beta shape parameters must be positive")
    log_b_q = log_gamma(aq) + log_gamma(bq) - log_gamma(aq + bq)
    log_b_p = log_gamma(ap) + log_gamma(bp) - log_gamma(ap + bp)
    psi_sum = digamma(ap + bp)
    value = (log_b_q - log_b_p
             + (ap - aq) * (digamma(ap) - psi_sum)
             + (bp - bq) * (digamma(bp) - psi_sum))
    return max(value, 0.0) if value > -_ROUNDOFF else value


def curvature_along_segment(p: DensityHandle, q: DensityHandle, h: DensityHandle, f: DensityHandle,
                            pi: float, spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Second derivative in ``pi`` of ``KL_h(f || (1 - pi) p + pi q)``.

    Equals ``int (f + h) (p - q)**2 / ((1 - pi) p + pi q + h)**2``.
    """
    if not 0.0 < pi < 1.0:
        raise ValueError("pi must lie in (0, 1)")
    s = merged_spec(spec, p, q, h, f)

    def integrand(x):
        px, qx, hx = p(x), q(x), h(x)
        return (f(x) + hx) * (px - qx) ** 2 / ((1.0 - pi) * px + pi * qx + hx) ** 2

    return integrate(integrand, s)


def segment_density(p: DensityHandle, q: DensityHandle, pi: float) -> DensityHandle:
    """The convex combination ``(1 - pi) p + pi q`` as a handle."""
    return DensityHandle(
        kind="segment",
        pdf=lambda x: (1.0 - pi) * p(x) + pi * q(x),
        breakpoints=tuple(sorted(set(p.breakpoints) | set(q.breakpoints))),
        sup_bound=max(p.sup_bound, q.sup_bound),
        inf_bound=min(p.inf_bound, q.inf_bound),
        label=f"segment({p.label},{q.label},{pi:g})",
    )
