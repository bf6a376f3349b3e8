"""Densities on [0, 1]: beta components, the two simulation targets, and the
uniform and arcsine lifting densities.

Every density is wrapped in a :class:`DensityHandle` that knows how to
evaluate itself (vectorised), where its kinks/jumps are, what bounds it obeys
and how to draw exact i.i.d. samples from a :class:`numpy.random.Generator`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .numerics import endpoint_grading, log_gamma

THETA_MIN = 1.0
THETA_MAX = 50.0

# beta shapes near 1 put x**(a-1) kinks at the ends; grading resolves them
BETA_BREAKPOINTS = endpoint_grading(6)


class UnsupportedSamplerError(TypeError):
    """The density has no exact sampler."""


@dataclass(frozen=True)
class ComponentParams:
    """Shape pair (a, b) of one beta component, confined to the box [THETA_MIN, THETA_MAX]^2."""

    a: float
    b: float

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        for name in ("a", "b"):
            v = getattr(self, name)
            if not (THETA_MIN <= v <= THETA_MAX):
                raise ValueError(f"shape {name}={v} outside [{THETA_MIN}, {THETA_MAX}]")

    def as_tuple(self) -> tuple[float, float]:
        return (self.a, self.b)


def _log_beta_norm(a, b):
    return log_gamma(a + b) - log_gamma(a) - log_gamma(b)


def beta_pdf(x, theta):
    """Beta density at ``x``; ``theta`` is a ComponentParams or an (a, b) pair.

    Evaluated in log space. An endpoint gets 0 when its exponent is positive,
    the normaliser when the exponent is zero, and +inf when it is negative.
    """
    a, b = theta.as_tuple() if isinstance(theta, ComponentParams) else map(float, theta)
    x = np.asarray(x, dtype=float)
    lognorm = _log_beta_norm(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        lx = np.log(x)
        l1x = np.log1p(-x)
        ta = np.where(a == 1.0, 0.0, (a - 1.0) * lx)
        tb = np.where(b == 1.0, 0.0, (b - 1.0) * l1x)
        out = np.exp(lognorm + ta + tb)
    out = np.where((x < 0.0) | (x > 1.0), 0.0, out)
    return float(out) if out.ndim == 0 else out


def beta_log_pdf_terms(log_x, log_1mx, a, b):
    """log beta density given precomputed ``log x`` and ``log(1-x)``."""
    return _log_beta_norm(a, b) + (a - 1.0) * log_x + (b - 1.0) * log_1mx


def beta_mode_value(a: float, b: float) -> float:
    """Supremum of the beta density over [0, 1] for a, b >= 1."""
    if a < 1.0 or b < 1.0:
        return float("inf")
    if a == 1.0 and b == 1.0:
        return 1.0
    if a == 1.0:
        return float(b)
    if b == 1.0:
        return float(a)
    mode = (a - 1.0) / (a + b - 2.0)
    return float(beta_pdf(mode, (a, b)))


def target_f1(x):
    """Equal-mass uniforms on [0, 2/5] and [3/5, 1] (height 5/4), zero in between."""
    x = np.asarray(x, dtype=float)
    inside = ((x >= 0.0) & (x <= 0.4)) | ((x >= 0.6) & (x <= 1.0))
    out = np.where(inside, 1.25, 0.0)
    return float(out) if out.ndim == 0 else out


def target_f2(x):
    """V-shaped density 2 - 4x on [0, 1/2] and 4x - 2 on (1/2, 1]."""
    x = np.asarray(x, dtype=float)
    out = np.where(x <= 0.5, 2.0 - 4.0 * x, -2.0 + 4.0 * x)
    out = np.where((x < 0.0) | (x > 1.0), 0.0, out)
    return float(out) if out.ndim == 0 else out


def uniform_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.where((x < 0.0) | (x > 1.0), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def arcsine_pdf(x):
    """Beta(1/2, 1/2) density 1 / (pi sqrt(x(1-x))); infinite at the endpoints."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 1.0 / (np.pi * np.sqrt(x * (1.0 - x)))
    out = np.where((x < 0.0) | (x > 1.0), 0.0, out)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- sampling

def sample_gamma(rng: np.random.Generator, shape: float, n: int) -> np.ndarray:
    """Marsaglia-Tsang Gamma(shape, 1) variates.

    For shape < 1 the usual boost ``G(shape+1) * U**(1/shape)`` is applied.
    """
    if shape <= 0.0:
        raise ValueError("gamma shape must be positive")
    if n == 0:
        return np.empty(0)
    boost = shape < 1.0
    alpha = shape + 1.0 if boost else shape
    d = alpha - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(n)
    filled = 0
    while filled < n:
        need = n - filled
        # acceptance rate is above 95% for alpha >= 1
        m = int(need * 1.1) + 8
        z = rng.standard_normal(m)
        u = rng.random(m)
        v = (1.0 + c * z) ** 3
        ok = v > 0.0
        with np.errstate(invalid="ignore", divide="ignore"):
            accept = ok & (np.log(u) < 0.5 * z * z + d - d * v + d * np.log(np.where(ok, v, 1.0)))
        got = (d * v)[accept][:need]
        out[filled:filled + got.size] = got
        filled += got.size
    if boost:
        out *= rng.random(n) ** (1.0 / shape)
    return out


def sample_beta(rng: np.random.Generator, a: float, b: float, n: int) -> np.ndarray:
    x = sample_gamma(rng, a, n)
    y = sample_gamma(rng, b, n)
    return x / (x + y)


def _sample_f1(rng, n):
    u = rng.random(n)
    left = rng.random(n) < 0.5
    return np.where(left, 0.4 * u, 0.6 + 0.4 * u)


def _sample_f2(rng, n):
    u = rng.random(n)
    with np.errstate(invalid="ignore"):
        lo = (1.0 - np.sqrt(np.clip(1.0 - 2.0 * u, 0.0, None))) / 2.0
        hi = 1.0 - (1.0 - np.sqrt(np.clip(2.0 * u - 1.0, 0.0, None))) / 2.0
    return np.where(u <= 0.5, lo, hi)


def _sample_arcsine(rng, n):
    return np.sin(0.5 * np.pi * rng.random(n)) ** 2


def _sample_uniform(rng, n):
    return rng.random(n)


# ---------------------------------------------------------------- handles

@dataclass(frozen=True, eq=False)
class DensityHandle:
    """An evaluable density on [0, 1] with declared structure.

    ``sup_bound`` is ``inf`` when the density is unbounded; ``inf_bound`` is a
    valid lower bound (0 when the density touches zero).
    """

    kind: str
    pdf: Callable[[np.ndarray], np.ndarray]
    breakpoints: tuple[float, ...] = ()
    sup_bound: float = float("inf")
    inf_bound: float = 0.0
    sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None
    params: object = None
    label: str = ""

    def __call__(self, x):
        return self.pdf(x)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return sample(self, rng, n)

    def __repr__(self):
        return f"DensityHandle({self.label or self.kind})"


def sample(density: DensityHandle, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. points from ``density`` using ``rng``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if density.sampler is None:
        raise UnsupportedSamplerError(f"{density!r} has no sampler")
    return np.asarray(density.sampler(rng, int(n)), dtype=float)


def beta_density(theta) -> DensityHandle:
    if not isinstance(theta, ComponentParams):
        theta = ComponentParams(*theta)
    a, b = theta.as_tuple()
    lo = 0.0 if (a > 1.0 or b > 1.0) else 1.0
    return DensityHandle(
        kind="beta",
        pdf=lambda x: beta_pdf(x, theta),
        breakpoints=BETA_BREAKPOINTS,
        sup_bound=beta_mode_value(a, b),
        inf_bound=lo,
        sampler=lambda rng, n: sample_beta(rng, a, b, n),
        params=theta,
        label=f"beta:{a:g},{b:g}",
    )


def target_f1_density() -> DensityHandle:
    return DensityHandle("target_f1", target_f1, (0.4, 0.6), 1.25, 0.0, _sample_f1, label="f1")


def target_f2_density() -> DensityHandle:
    return DensityHandle("target_f2", target_f2, (0.5,), 2.0, 0.0, _sample_f2, label="f2")


def uniform_density() -> DensityHandle:
    return DensityHandle("lifting_uniform", uniform_pdf, (), 1.0, 1.0, _sample_uniform, label="uniform")


def arcsine_density() -> DensityHandle:
    # graded panels toward both ends absorb the x**-1/2 singularities
    return DensityHandle("lifting_arcsine", arcsine_pdf, endpoint_grading(), float("inf"),
                         2.0 / np.pi, _sample_arcsine, label="arcsine")
