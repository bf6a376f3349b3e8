"""Nonlinear least-squares fit of the rate model

    E[K] = a0 + a1 / (k + 2)**b1 + a2 / n**b2

by Levenberg-Marquardt, with White's sandwich covariance for asymptotic
confidence intervals that stay valid when the model is misspecified.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

PARAM_NAMES = ("a0", "a1", "a2", "b1", "b2")
Z_95 = 1.96
_POLISH_STEPS = 3


class SingularDesignError(np.linalg.LinAlgError):
    pass


@dataclass
class RegressionFit:
    params: np.ndarray
    covariance: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    rss: float
    n_obs: int
    converged: bool
    iterations: int = 0

    def as_dict(self) -> dict:
        return dict(zip(PARAM_NAMES, map(float, self.params)))


def _arrays(rows):
    arr = np.asarray([(float(k), float(n), float(K)) for k, n, K in rows], dtype=float)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("no rows to fit")
    return arr[:, 0], arr[:, 1], arr[:, 2]


def rate_model(k, n, beta) -> np.ndarray:
    a0, a1, a2, b1, b2 = beta
    return a0 + a1 * (np.asarray(k) + 2.0) ** (-b1) + a2 * np.asarray(n, dtype=float) ** (-b2)


def rate_jacobian(k, n, beta) -> np.ndarray:
    """Analytic (rows, 5) Jacobian of :func:`rate_model` in (a0, a1, a2, b1, b2)."""
    _, a1, a2, b1, b2 = beta
    kk = np.asarray(k, dtype=float) + 2.0
    nn = np.asarray(n, dtype=float)
    pk = kk ** (-b1)
    pn = nn ** (-b2)
    return np.column_stack([np.ones_like(kk), pk, pn, -a1 * np.log(kk) * pk, -a2 * np.log(nn) * pn])


def default_init(k, n, K) -> np.ndarray:
    """``a0 = min K``, unit exponents, and (a1, a2) by least squares given those."""
    a0 = float(np.min(K))
    X = np.column_stack([1.0 / (k + 2.0), 1.0 / n])
    coef, *_ = np.linalg.lstsq(X, K - a0, rcond=None)
    return np.array([a0, coef[0], coef[1], 1.0, 1.0])


def linear_init(k, n, K) -> np.ndarray:
    """Unit exponents with (a0, a1, a2) all by least squares."""
    X = np.column_stack([np.ones_like(k), 1.0 / (k + 2.0), 1.0 / n])
    coef, *_ = np.linalg.lstsq(X, K, rcond=None)
    return np.array([coef[0], coef[1], coef[2], 1.0, 1.0])


def _check_design(k, n):
    if np.any(k < 2):
        raise ValueError("rate model rows need k >= 2")
    if np.unique(k).size < 2 or np.unique(n).size < 2:
        raise SingularDesignError("need at least two distinct k and two distinct n")


def fit_rate_model(rows: Iterable[Sequence[float]], init: Optional[Sequence[float]] = None,
                   max_iters: int = 500, tol: float = 1e-12) -> RegressionFit:
    """Levenberg-Marquardt on the residual sum of squares.

    ``rows`` holds (k, n, K) triples. Without ``init`` the fit starts from
    both :func:`default_init` and :func:`linear_init` and keeps the converged
    run with the smaller RSS. Rows are sorted internally so the
    result does not depend on their order. Each iteration tries the plain
    Gauss-Newton step and keeps it if the RSS drops; otherwise it takes a
    damped step with Marquardt scaling. Damping starts at 1e-3 and is
    multiplied by 0.3 after an accepted step and by 10 after a rejected one.
    Convergence means the gradient ``J^T r`` fell below ``tol * (1 + RSS)``,
    or the relative RSS change stayed below ``tol`` for a few further steps.
    """
    k, n, K = _arrays(rows)
    order = np.lexsort((K, n, k))
    k, n, K = k[order], n[order], K[order]
    _check_design(k, n)
    if init is None:
        starts = [default_init(k, n, K), linear_init(k, n, K)]
    else:
        starts = [np.asarray(init, dtype=float).copy()]
        if starts[0].shape != (5,):
            raise ValueError("init must have five entries")

    best = None
    with np.errstate(over="ignore", invalid="ignore"):
        for beta in starts:
            fit = _levenberg_marquardt(k, n, K, beta, max_iters, tol)
            if best is None or (fit.converged, -fit.rss) > (best.converged, -best.rss):
                best = fit
    return best


def _levenberg_marquardt(k, n, K, beta, max_iters, tol) -> RegressionFit:
    # trial steps may overflow; those come back as non-finite RSS and are rejected
    r = K - rate_model(k, n, beta)
    rss = float(r @ r)
    lam = 1e-3
    exact = 1e-30 * max(1.0, float(K @ K))
    converged = rss <= exact
    # once the RSS has settled, a few polishing steps drive J^T r toward zero
    settled = 0
    it = 0
    while not converged and it < max_iters:
        it += 1
        J = rate_jacobian(k, n, beta)
        g = J.T @ r
        if np.max(np.abs(g)) <= tol * (1.0 + rss) or settled >= _POLISH_STEPS:
            converged = True
            break
        change = None
        # undamped minimum-norm Gauss-Newton step first; it copes with the
        # exponent columns vanishing when a1 or a2 is zero
        gn, *_ = np.linalg.lstsq(J, r, rcond=None)
        r_gn = K - rate_model(k, n, beta + gn)
        rss_gn = float(r_gn @ r_gn)
        # while polishing, an RSS tie at roundoff level still counts as progress
        slack = 1e-14 * rss if settled else 0.0
        if np.isfinite(rss_gn) and (rss_gn < rss or (settled and rss_gn <= rss + slack)):
            change = max(rss - rss_gn, 0.0) / rss
            beta, r, rss = beta + gn, r_gn, rss_gn
        else:
            A = J.T @ J
            scale = np.maximum(np.diag(A), 1e-6 * np.max(np.diag(A)))
            while lam < 1e16:
                try:
                    delta = np.linalg.solve(A + lam * np.diag(scale), g)
                except np.linalg.LinAlgError:
                    lam *= 10.0
                    continue
                trial = beta + delta
                r_new = K - rate_model(k, n, trial)
                rss_new = float(r_new @ r_new)
                if np.isfinite(rss_new) and rss_new <= rss:
                    change = (rss - rss_new) / max(rss, 1e-300)
                    beta, r, rss = trial, r_new, rss_new
                    lam *= 0.3
                    break
                if np.isfinite(rss_new) and (rss_new - rss) <= tol * rss:
                    # uphill only by roundoff: already at the minimum
                    change = 0.0
                    break
                lam *= 10.0
        if change is None:
            break
        if rss <= exact:
            converged = True
        elif change < tol:
            settled += 1
        else:
            settled = 0

    fit = RegressionFit(params=beta, covariance=np.full((5, 5), np.nan), ci_lower=np.full(5, np.nan),
                        ci_upper=np.full(5, np.nan), rss=rss, n_obs=int(K.size), converged=converged,
                        iterations=it)
    try:
        cov = _sandwich(k, n, K, beta)
    except SingularDesignError:
        return fit
    fit.covariance = cov
    half = Z_95 * np.sqrt(np.clip(np.diag(cov), 0.0, None))
    fit.ci_lower = beta - half
    fit.ci_upper = beta + half
    return fit


def _sandwich(k, n, K, beta) -> np.ndarray:
    J = rate_jacobian(k, n, beta)
    r = K - rate_model(k, n, beta)
    H = J.T @ J
    if np.linalg.matrix_rank(H) < H.shape[0]:
        raise SingularDesignError("Gauss-Newton Hessian is singular")
    Hinv = np.linalg.inv(H)
    Jr = J * r[:, None]
    M = Jr.T @ Jr
    cov = Hinv @ M @ Hinv
    return 0.5 * (cov + cov.T)


def sandwich_covariance(rows, fit: RegressionFit) -> np.ndarray:
    """``H^-1 M H^-1`` with ``H = sum J_i^T J_i`` and ``M = sum r_i^2 J_i^T J_i``."""
    if not fit.converged:
        raise ValueError("fit did not converge")
    k, n, K = _arrays(rows)
    return _sandwich(k, n, K, fit.params)


def classical_covariance(rows, fit: RegressionFit) -> np.ndarray:
    """Homoskedastic ``sigma^2 H^-1`` for comparison."""
    k, n, K = _arrays(rows)
    J = rate_jacobian(k, n, fit.params)
    dof = max(K.size - 5, 1)
    return fit.rss / dof * np.linalg.inv(J.T @ J)


def aggregate_means(rows) -> list[tuple[int, int, float]]:
    """Collapse replicates to one (k, n, mean K) row per cell."""
    cells: dict[tuple[int, int], list[float]] = {}
    for k, n, K in rows:
        cells.setdefault((int(k), int(n)), []).append(float(K))
    return [(k, n, float(np.mean(v))) for (k, n), v in sorted(cells.items())]


def format_fit_report(fit: RegressionFit) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["param", "estimate", "ci_lower", "ci_upper"])
    for i, name in enumerate(PARAM_NAMES):
        w.writerow([name] + [format(float(v), ".17g") for v in (fit.params[i], fit.ci_lower[i], fit.ci_upper[i])])
    w.writerow(["meta", f"rss={fit.rss:.17g}", f"n_obs={fit.n_obs}", f"converged={str(fit.converged).lower()}"])
    return buf.getvalue()
