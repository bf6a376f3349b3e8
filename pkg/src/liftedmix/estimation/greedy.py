"""Greedy approximation sequence over convex combinations of beta components.

Starting from the best single component, step k mixes one more component
into the previous approximation,

    f_k = (1 - pi_k) f_{k-1} + pi_k phi(.; theta_k),

choosing ``(pi_k, theta_k)`` by exhaustive search over a finite grid so that
the inner optimum is exact on that grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..densities import THETA_MAX, THETA_MIN, DensityHandle, beta_mode_value
from ..divergence import merged_spec
from ..mixture import MixtureParams, component_pdfs
from ..numerics import QuadratureSpec


class EmptyGridError(ValueError):
    pass


@dataclass(frozen=True)
class LiftedObjective:
    """``kappa(g) = sum_i w_i [log(f + h)(x_i) - log(g(x_i) + h(x_i))]``.

    With quadrature nodes and weights ``w_i = q_i (f + h)(x_i)`` this is the
    population divergence ``KL_h(f || g)``; with the pooled two-sample points
    and ``w_i = 1/n`` it is the sample divergence.
    """

    points: np.ndarray
    weights: np.ndarray
    log_f_plus_h: np.ndarray
    h_values: np.ndarray
    lifting_inf: float

    @classmethod
    def population(cls, f: DensityHandle, h: DensityHandle, spec: QuadratureSpec = QuadratureSpec()):
        x, q = merged_spec(spec, f, h).nodes_and_weights()
        fh = f(x) + h(x)
        return cls(np.asarray(x), q * fh, np.log(fh), np.asarray(h(x), dtype=float), h.inf_bound)

    @classmethod
    def empirical(cls, f: DensityHandle, h: DensityHandle, xs, ys):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.size == 0 or xs.shape != ys.shape:
            raise ValueError("xs and ys must be non-empty and of equal length")
        z = np.concatenate([xs, ys])
        hz = np.asarray(h(z), dtype=float)
        return cls(z, np.full(z.size, 1.0 / xs.size), np.log(f(z) + hz), hz, h.inf_bound)

    def from_values(self, g_values: np.ndarray) -> np.ndarray:
        """Evaluate kappa for one or many candidate densities (points along axis 0)."""
        g_values = np.asarray(g_values, dtype=float)
        if g_values.ndim == 1:
            return float(self.weights @ (self.log_f_plus_h - np.log(g_values + self.h_values)))
        shaped = g_values.reshape(g_values.shape[0], -1)
        vals = self.weights @ (self.log_f_plus_h[:, None] - np.log(shaped + self.h_values[:, None]))
        return vals.reshape(g_values.shape[1:])

    def __call__(self, psi: MixtureParams) -> float:
        return self.from_values(component_pdfs(self.points, psi.shapes) @ psi.weights)


@dataclass(frozen=True)
class GreedyGrid:
    pi_values: tuple[float, ...]
    thetas: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pis = tuple(sorted(float(p) for p in self.pi_values))
        ths = tuple(sorted((float(a), float(b)) for a, b in self.thetas))
        if not pis or not ths:
            raise EmptyGridError("greedy grid needs at least one pi and one theta")
        if pis[0] < 0.0 or pis[-1] > 1.0:
            raise ValueError("pi values must lie in [0, 1]")
        object.__setattr__(self, "pi_values", pis)
        object.__setattr__(self, "thetas", ths)

    @classmethod
    def default(cls, n_pi: int = 101, n_theta: int = 25) -> "GreedyGrid":
        axis = np.geomspace(THETA_MIN, THETA_MAX, n_theta)
        return cls(tuple(np.linspace(0.0, 1.0, n_pi)), tuple((a, b) for a in axis for b in axis))

    def sup_bound(self) -> float:
        """Largest component density value over the grid (the constant c)."""
        return max(beta_mode_value(a, b) for a, b in self.thetas)


@dataclass
class GreedyStep:
    k: int
    psi: MixtureParams
    objective: float
    pi: float
    theta: tuple[float, float]


@dataclass
class GreedyRun:
    steps: list[GreedyStep] = field(default_factory=list)
    c: float = float("nan")
    a: float = float("nan")

    @property
    def objectives(self) -> list[float]:
        return [s.objective for s in self.steps]

    def bound(self, k: int) -> float:
        """``4 c^2 / (a^2 (k + 2))``."""
        return 4.0 * self.c ** 2 / (self.a ** 2 * (k + 2))


def _append_component(weights: list[float], thetas: list[tuple[float, float]], pi: float, theta):
    if pi == 0.0:
        return weights, thetas
    weights = [w * (1.0 - pi) for w in weights]
    if theta in thetas:
        weights[thetas.index(theta)] += pi
    else:
        weights.append(pi)
        thetas = thetas + [theta]
    keep = [i for i, w in enumerate(weights) if w > 0.0]
    return [weights[i] for i in keep], [thetas[i] for i in keep]


def greedy_fit(kappa: LiftedObjective, k_max: int, grid: GreedyGrid = None) -> GreedyRun:
    """Run the greedy sequence for k = 1..k_max.

    Step 1 picks the best single grid component. Each later step scans every
    ``(pi, theta)`` on the grid; ties go to the smallest pi and then the
    lexicographically smallest theta.
    """
    grid = grid if grid is not None else GreedyGrid.default()
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    theta_arr = np.array(grid.thetas, dtype=float)
    phi = component_pdfs(kappa.points, theta_arr)  # (points, thetas)
    run = GreedyRun(c=grid.sup_bound(), a=kappa.lifting_inf)

    singles = kappa.from_values(phi)
    j = int(np.argmin(singles))
    weights, thetas = [1.0], [grid.thetas[j]]
    g = phi[:, j].copy()
    run.steps.append(GreedyStep(1, MixtureParams.from_arrays(weights, thetas), float(singles[j]), 1.0, grid.thetas[j]))

    for k in range(2, k_max + 1):
        best = (np.inf, 0, 0)
        for ip, pi in enumerate(grid.pi_values):
            cand = (1.0 - pi) * g[:, None] + pi * phi
            vals = kappa.from_values(cand)
            jt = int(np.argmin(vals))
            if vals[jt] < best[0]:
                best = (float(vals[jt]), ip, jt)
        value, ip, jt = best
        pi = grid.pi_values[ip]
        theta = grid.thetas[jt]
        g = (1.0 - pi) * g + pi * phi[:, jt]
        weights, thetas = _append_component(weights, thetas, pi, theta)
        total = sum(weights)
        psi = MixtureParams.from_arrays([w / total for w in weights], thetas)
        run.steps.append(GreedyStep(k, psi, value, pi, theta))
    return run
