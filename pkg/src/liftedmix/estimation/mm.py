"""Minorization-maximization for maximum h-lifted likelihood beta mixtures.

The objective is the two-sample lifted log-likelihood

    L(psi) = (1/n) sum_i [log(f_psi(X_i) + h(X_i)) + log(f_psi(Y_i) + h(Y_i))]

with ``X ~ f`` (data) and ``Y ~ h`` (lifting sample). Each MM step computes
component responsibilities ``tau_j`` and the lifting responsibility ``gamma``
at the current iterate, then maximizes the Jensen minorizer, which separates
into a closed-form weight update and one weighted beta maximum likelihood
problem per component.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..densities import THETA_MAX, THETA_MIN, ComponentParams, DensityHandle
from ..mixture import DegenerateWeightsError, MixtureParams
from ..numerics import _digamma, _log_gamma, _trigamma

log = logging.getLogger(__name__)

_MIN_COLUMN_MASS = 1e-12
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class MMConfig:
    max_iters: int = 500
    rel_tol: float = 1e-8
    restarts: int = 5
    newton_max_iters: int = 50
    newton_tol: float = 1e-10

    def __post_init__(self):
        for name in ("max_iters", "restarts", "newton_max_iters"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        for name in ("rel_tol", "newton_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class Responsibilities:
    """Per-point shares of each component (``tau``) and of the lifting density (``gamma``)."""

    tau: np.ndarray
    gamma_x: np.ndarray
    tau_y: np.ndarray
    gamma_y: np.ndarray

    @property
    def n(self) -> int:
        return self.tau.shape[0]


@dataclass
class FitResult:
    psi: MixtureParams
    objective: float
    objective_trace: list[float]
    iterations: int
    restart_index: int
    converged: bool = False
    restart_objectives: list[float] = field(default_factory=list)

    def trace_text(self) -> str:
        return "".join(format(v, ".17g") + "\n" for v in self.objective_trace)


class _Sample:
    """Pooled X and Y sample with the quantities every iteration reuses."""

    def __init__(self, h: DensityHandle, xs, ys):
        xs = np.asarray(xs, dtype=float).ravel()
        ys = np.asarray(ys, dtype=float).ravel()
        if xs.size == 0 or xs.shape != ys.shape:
            raise ValueError("xs and ys must be non-empty and of equal length")
        self.n = xs.size
        self.z = np.concatenate([xs, ys])
        # keep logs finite for draws that land exactly on an endpoint
        zc = np.clip(self.z, 1e-300, 1.0 - 2.0 ** -53)
        self.log_z = np.log(zc)
        self.log_1mz = np.log1p(-zc)
        self.design = np.column_stack([self.log_z, self.log_1mz])
        self.hz = np.asarray(h(self.z), dtype=float)
        if np.any(self.hz <= 0.0) or not np.all(np.isfinite(self.hz)):
            raise ValueError("lifting density must be positive and finite at every sample point")

    def log_phi(self, shapes: np.ndarray) -> np.ndarray:
        return self.design @ (shapes - 1.0).T + _log_norm(shapes[:, 0], shapes[:, 1])

    def lifted(self, weights: np.ndarray, shapes: np.ndarray):
        """Return (component terms pi_j phi_j, lifted mixture f_psi + h)."""
        terms = np.exp(self.log_phi(shapes)) * weights
        return terms, terms.sum(axis=1) + self.hz

    def objective(self, weights, shapes) -> float:
        _, total = self.lifted(weights, shapes)
        return _objective_from_total(total, self.n)


def _objective_from_total(total, n):
    return float(np.log(total).sum() / n)


# ------------------------------------------------------------ public pieces

def responsibilities(psi: MixtureParams, h: DensityHandle, xs, ys) -> Responsibilities:
    s = _Sample(h, xs, ys)
    terms, total = s.lifted(psi.weights, psi.shapes)
    tau = terms / total[:, None]
    gamma = s.hz / total
    n = s.n
    return Responsibilities(tau=tau[:n], gamma_x=gamma[:n], tau_y=tau[n:], gamma_y=gamma[n:])


def _xlogx(t):
    return np.where(t > 0.0, t * np.log(np.where(t > 0.0, t, 1.0)), 0.0)


def _xlogy(t, y):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(t > 0.0, t * np.log(y), 0.0)


def minorizer_value(psi: MixtureParams, chi: MixtureParams, h: DensityHandle, xs, ys) -> float:
    """Jensen minorizer ``Q_n(psi, chi)`` of the lifted log-likelihood, with 0 log 0 = 0."""
    s = _Sample(h, xs, ys)
    r = responsibilities(chi, h, xs, ys)
    tau = np.vstack([r.tau, r.tau_y])
    gamma = np.concatenate([r.gamma_x, r.gamma_y])
    log_phi = s.log_phi(psi.shapes)
    with np.errstate(divide="ignore"):
        log_pi = np.log(psi.weights)
    total = (_xlogy(tau, np.exp(log_pi)[None, :]).sum()
             + np.where(tau > 0.0, tau * log_phi, 0.0).sum()
             + _xlogy(gamma, s.hz).sum()
             - _xlogx(tau).sum()
             - _xlogx(gamma).sum())
    return float(total / s.n)


def update_weights(r: Responsibilities) -> np.ndarray:
    mass = r.tau.sum(axis=0) + r.tau_y.sum(axis=0)
    total = mass.sum()
    if not total > 0.0:
        raise DegenerateWeightsError("all responsibility sits on the lifting density")
    return mass / total


# ------------------------------------------------- weighted beta M-step

def _log_norm(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    k = a.size
    lg = _log_gamma(np.concatenate([np.ravel(a + b), np.ravel(a), np.ravel(b)]))
    return (lg[:k] - lg[k:2 * k] - lg[2 * k:]).reshape(a.shape)


def weighted_beta_objective(a, b, mass, s1, s2):
    """``mass * log B(a,b)^-1 + (a-1) s1 + (b-1) s2`` (vectorised over components)."""
    return mass * _log_norm(a, b) + (a - 1.0) * s1 + (b - 1.0) * s2


def _gradient(a, b, mass, s1, s2):
    d = _digamma(np.concatenate([a + b, a, b]))
    k = a.size
    ds, da, db = d[:k], d[k:2 * k], d[2 * k:]
    return mass * (ds - da) + s1, mass * (ds - db) + s2


def _projected(ga, gb, a, b, lo, hi):
    """Zero out gradient components that point out of the box at an active bound."""
    ga = np.where(((a <= lo) & (ga < 0.0)) | ((a >= hi) & (ga > 0.0)), 0.0, ga)
    gb = np.where(((b <= lo) & (gb < 0.0)) | ((b >= hi) & (gb > 0.0)), 0.0, gb)
    return ga, gb


def maximize_weighted_beta(mass, s1, s2, a0, b0, max_iters=50, tol=1e-10,
                           lo=THETA_MIN, hi=THETA_MAX):
    """Maximize ``weighted_beta_objective`` over ``[lo, hi]^2`` for each component.

    Projected Newton with an active set and backtracking. Components whose
    Hessian is ill-conditioned take a projected-gradient step whose length is
    found by bisection on the directional derivative. The objective never
    decreases from the starting point. Arrays of length k in, arrays out.
    """
    mass = np.asarray(mass, dtype=float)
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    a = np.clip(np.array(a0, dtype=float), lo, hi)
    b = np.clip(np.array(b0, dtype=float), lo, hi)
    k = a.size
    f = weighted_beta_objective(a, b, mass, s1, s2)
    done = np.zeros(k, dtype=bool)
    for _ in range(max_iters):
        ga, gb = _gradient(a, b, mass, s1, s2)
        pa, pb = _projected(ga, gb, a, b, lo, hi)
        done |= np.maximum(np.abs(pa), np.abs(pb)) <= tol
        if done.all():
            break
        t = _trigamma(np.concatenate([a + b, a, b]))
        ts, ta, tb = t[:k], t[k:2 * k], t[2 * k:]
        haa = mass * (ts - ta)
        hbb = mass * (ts - tb)
        hab = mass * ts
        free_a = pa != 0.0
        free_b = pb != 0.0
        both = free_a & free_b
        det = haa * hbb - hab * hab
        # Newton direction on the free coordinates
        with np.errstate(divide="ignore", invalid="ignore"):
            da = np.where(both, -(hbb * pa - hab * pb) / det, np.where(free_a, -pa / haa, 0.0))
            db = np.where(both, -(haa * pb - hab * pa) / det, np.where(free_b, -pb / hbb, 0.0))
            tr = haa + hbb
            disc = np.sqrt(np.maximum((haa - hbb) ** 2 + 4 * hab * hab, 0.0))
            lam_small = np.abs(0.5 * (tr + disc))
            lam_big = np.abs(0.5 * (tr - disc))
            cond = np.where(both, lam_big / lam_small, 1.0)
        decrement = da * pa + db * pb
        bad = ~np.isfinite(da) | ~np.isfinite(db) | (cond > _COND_LIMIT) | (decrement <= 0.0)
        # near the optimum the objective change drowns in roundoff; allow it
        slack = np.where(decrement < 1e-8, 1e-14 * (1.0 + np.abs(f)), 0.0)
        step = 1.0
        new_a, new_b, new_f = a, b, f
        accepted = np.zeros(k, dtype=bool)
        active = ~done & ~bad
        for _ls in range(30):
            if not active.any():
                break
            ca = np.where(active, np.clip(a + step * da, lo, hi), a)
            cb = np.where(active, np.clip(b + step * db, lo, hi), b)
            cf = weighted_beta_objective(ca, cb, mass, s1, s2)
            ok = active & (cf >= f - slack)
            new_a = np.where(ok, ca, new_a)
            new_b = np.where(ok, cb, new_b)
            new_f = np.where(ok, cf, new_f)
            accepted |= ok
            active &= ~ok
            step *= 0.5
        fallback = ~done & ~accepted
        if fallback.any():
            for j in np.flatnonzero(fallback):
                new_a[j], new_b[j], new_f[j] = _gradient_bisection(
                    a[j], b[j], pa[j], pb[j], mass[j], s1[j], s2[j], f[j], lo, hi)
        moved = (new_a != a) | (new_b != b)
        done |= ~moved & ~done & fallback
        a, b, f = new_a, new_b, new_f
    return a, b


def _gradient_bisection(a, b, ga, gb, mass, s1, s2, f0, lo, hi, iters=60):
    """Line search along the projected gradient by bisection on the slope."""
    norm = np.hypot(ga, gb)
    if norm == 0.0:
        return a, b, f0
    ua, ub = ga / norm, gb / norm
    # largest feasible step along (ua, ub)
    limits = []
    for x, u in ((a, ua), (b, ub)):
        if u > 0:
            limits.append((hi - x) / u)
        elif u < 0:
            limits.append((lo - x) / u)
    t_hi = min(limits) if limits else 0.0
    if t_hi <= 0.0:
        return a, b, f0

    def slope(t):
        ga_t, gb_t = _gradient(np.array([a + t * ua]), np.array([b + t * ub]),
                               np.array([mass]), np.array([s1]), np.array([s2]))
        return float(ga_t[0] * ua + gb_t[0] * ub)

    t_lo = 0.0
    if slope(t_hi) >= 0.0:
        t_best = t_hi
    else:
        for _ in range(iters):
            mid = 0.5 * (t_lo + t_hi)
            if slope(mid) > 0.0:
                t_lo = mid
            else:
                t_hi = mid
        t_best = t_lo
    na = min(max(a + t_best * ua, lo), hi)
    nb = min(max(b + t_best * ub, lo), hi)
    nf = float(weighted_beta_objective(np.array([na]), np.array([nb]), np.array([mass]),
                                       np.array([s1]), np.array([s2]))[0])
    if nf < f0:
        return a, b, f0
    return na, nb, nf


def update_component(j: int, r: Responsibilities, xs, ys, theta_init: ComponentParams,
                     cfg: MMConfig = MMConfig()) -> tuple[ComponentParams, bool]:
    """Maximize the ``tau_j``-weighted beta log-likelihood over the shape box.

    Returns the new parameters and a flag that is False when the column
    carries (numerically) no mass and ``theta_init`` is returned unchanged.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = xs.size
    w = np.concatenate([r.tau[:, j], r.tau_y[:, j]])
    z = np.concatenate([xs, ys])
    mass = w.sum() / n
    if mass < _MIN_COLUMN_MASS:
        return theta_init, False
    with np.errstate(divide="ignore"):
        lz, l1z = np.log(z), np.log1p(-z)
    s1 = np.dot(np.where(w > 0, w, 0.0), np.where(w > 0, lz, 0.0)) / n
    s2 = np.dot(np.where(w > 0, w, 0.0), np.where(w > 0, l1z, 0.0)) / n
    a, b = maximize_weighted_beta(np.array([mass]), np.array([s1]), np.array([s2]),
                                  np.array([theta_init.a]), np.array([theta_init.b]),
                                  cfg.newton_max_iters, cfg.newton_tol)
    return ComponentParams(float(a[0]), float(b[0])), True


def weighted_beta_gradient(theta: ComponentParams, r: Responsibilities, j: int, xs, ys) -> np.ndarray:
    """Gradient of the (1/n)-scaled weighted beta log-likelihood at ``theta``."""
    xs = np.asarray(xs, dtype=float)
    n = xs.size
    w = np.concatenate([r.tau[:, j], r.tau_y[:, j]])
    z = np.concatenate([xs, np.asarray(ys, dtype=float)])
    mass = w.sum() / n
    s1 = np.dot(w, np.log(z)) / n
    s2 = np.dot(w, np.log1p(-z)) / n
    ga, gb = _gradient(np.array([theta.a]), np.array([theta.b]), np.array([mass]), np.array([s1]), np.array([s2]))
    return np.array([ga[0], gb[0]])


# ------------------------------------------------------------- MM driver

def _mm_step(sample: _Sample, terms, total, shapes, cfg: MMConfig):
    tau = terms / total[:, None]
    mass_total = tau.sum(axis=0)
    denom = mass_total.sum()
    if not denom > 0.0:
        raise DegenerateWeightsError("all responsibility sits on the lifting density")
    new_weights = mass_total / denom
    n = sample.n
    stats = sample.design.T @ tau / n
    mass = mass_total / n
    live = mass >= _MIN_COLUMN_MASS
    new_shapes = shapes.copy()
    if live.any():
        a, b = maximize_weighted_beta(mass[live], stats[0, live], stats[1, live],
                                      shapes[live, 0], shapes[live, 1],
                                      cfg.newton_max_iters, cfg.newton_tol)
        new_shapes[live, 0] = a
        new_shapes[live, 1] = b
    return new_weights, new_shapes


def mm_iterate(psi0: MixtureParams, h: DensityHandle, xs, ys, cfg: MMConfig = MMConfig(),
               restart_index: int = 0, sample: Optional[_Sample] = None) -> FitResult:
    """Run MM from a single starting point."""
    s = sample if sample is not None else _Sample(h, xs, ys)
    weights = np.array(psi0.weights, dtype=float)
    shapes = psi0.shapes.copy()
    terms, total = s.lifted(weights, shapes)
    obj = _objective_from_total(total, s.n)
    trace = [obj]
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        weights, shapes = _mm_step(s, terms, total, shapes, cfg)
        terms, total = s.lifted(weights, shapes)
        new_obj = _objective_from_total(total, s.n)
        trace.append(new_obj)
        if abs(new_obj - obj) <= cfg.rel_tol * max(1.0, abs(obj)):
            obj = new_obj
            converged = True
            break
        obj = new_obj
    psi = MixtureParams.from_arrays(_snap_to_simplex(weights), shapes)
    return FitResult(psi=psi, objective=obj, objective_trace=trace, iterations=it,
                     restart_index=restart_index, converged=converged)


def _snap_to_simplex(w):
    w = np.clip(np.asarray(w, dtype=float), 0.0, None)
    w = w / w.sum()
    w[np.argmax(w)] += 1.0 - w.sum()
    return w


def initial_params(xs, ys, k: int, rng: Optional[np.random.Generator]) -> MixtureParams:
    """Starting point: component means at the (j - 1/2)/k quantiles of the pooled
    sample, concentration a + b = 4, jittered by ``rng`` when given; equal weights."""
    pooled = np.concatenate([np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)])
    means = np.quantile(pooled, (np.arange(k) + 0.5) / k)
    conc = np.full(k, 4.0)
    if rng is not None:
        means = means + rng.normal(0.0, 0.05, size=k)
        conc = conc * np.exp(rng.normal(0.0, 0.25, size=k))
    means = np.clip(means, 0.01, 0.99)
    shapes = np.clip(np.column_stack([conc * means, conc * (1.0 - means)]), THETA_MIN, THETA_MAX)
    return MixtureParams.from_arrays(np.full(k, 1.0 / k), shapes)


def mm_fit(h: DensityHandle, xs, ys, k: int, cfg: MMConfig = MMConfig(),
           rng: Optional[np.random.Generator] = None) -> FitResult:
    """h-MLLE over k-component beta mixtures, best of ``cfg.restarts`` MM runs."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    sample = _Sample(h, xs, ys)
    streams = rng.spawn(cfg.restarts)
    best: Optional[FitResult] = None
    objectives = []
    errors = []
    for r, stream in enumerate(streams):
        psi0 = initial_params(xs, ys, k, stream)
        try:
            res = mm_iterate(psi0, h, xs, ys, cfg, restart_index=r, sample=sample)
        except DegenerateWeightsError as exc:
            log.debug("restart %d failed: %s", r, exc)
            errors.append(exc)
            objectives.append(float("-inf"))
            continue
        objectives.append(res.objective)
        if best is None or res.objective > best.objective:
            best = res
    if best is None:
        raise errors[-1]
    best.restart_objectives = objectives
    return best
