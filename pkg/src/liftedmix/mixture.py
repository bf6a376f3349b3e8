"""Finite beta mixtures ``x -> sum_j pi_j beta(x; a_j, b_j)``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .densities import BETA_BREAKPOINTS, ComponentParams, DensityHandle, beta_log_pdf_terms, beta_mode_value, sample_beta


class DegenerateWeightsError(ValueError):
    """Weights cannot be normalised onto the simplex."""


def renormalize_weights(weights: Sequence[float]) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise DegenerateWeightsError("weights must be a non-empty vector")
    if np.any(w < 0.0) or not np.all(np.isfinite(w)):
        raise DegenerateWeightsError("weights must be finite and non-negative")
    total = w.sum()
    if total <= 0.0:
        raise DegenerateWeightsError("all weights are zero")
    out = w / total
    # fold any residual drift into the largest entry
    out[np.argmax(out)] += 1.0 - out.sum()
    return out


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """Simplex weights plus one ComponentParams per component."""

    weights: np.ndarray
    components: tuple[ComponentParams, ...]

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        comps = tuple(c if isinstance(c, ComponentParams) else ComponentParams(*c) for c in self.components)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("need at least one component")
        if w.size != len(comps):
            raise ValueError("weights and components differ in length")
        if np.any(w < 0.0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must lie on the simplex (sum={w.sum()!r})")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_arrays(cls, weights, shapes) -> "MixtureParams":
        """Build from a weight vector and a (k, 2) array of shapes."""
        shapes = np.asarray(shapes, dtype=float).reshape(-1, 2)
        return cls(np.asarray(weights, dtype=float), tuple(ComponentParams(a, b) for a, b in shapes))

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def shapes(self) -> np.ndarray:
        return np.array([c.as_tuple() for c in self.components], dtype=float).reshape(-1, 2)

    def __eq__(self, other):
        if not isinstance(other, MixtureParams):
            return NotImplemented
        return np.array_equal(self.weights, other.weights) and self.components == other.components

    def __hash__(self):
        return hash((tuple(self.weights), self.components))

    def sup_bound(self) -> float:
        return max(beta_mode_value(c.a, c.b) for c in self.components)

    def to_row(self) -> list[str]:
        """Flat record ``k, pi_1..pi_k, a_1, b_1, ..., a_k, b_k``."""
        vals = [str(self.k)]
        vals += [format(p, ".17g") for p in self.weights]
        for c in self.components:
            vals += [format(c.a, ".17g"), format(c.b, ".17g")]
        return vals

    def to_csv(self) -> str:
        return ",".join(self.to_row())

    @classmethod
    def from_row(cls, fields: Sequence[str]) -> "MixtureParams":
        fields = [f.strip() for f in fields if f.strip() != ""]
        if not fields:
            raise ValueError("empty mixture record")
        try:
            k = int(fields[0])
            nums = [float(f) for f in fields[1:]]
        except ValueError as exc:
            raise ValueError(f"malformed mixture record: {exc}") from None
        if k < 1 or len(nums) != 3 * k:
            raise ValueError(f"mixture record for k={k} needs {3 * k} numbers, got {len(nums)}")
        w = np.asarray(nums[:k])
        # tolerate rounding in hand-written records
        if abs(w.sum() - 1.0) <= 1e-9:
            w = renormalize_weights(w)
        return cls.from_arrays(w, np.asarray(nums[k:]).reshape(k, 2))

    @classmethod
    def from_csv(cls, text: str) -> "MixtureParams":
        return cls.from_row(text.strip().split(","))


def component_log_pdfs(log_x: np.ndarray, log_1mx: np.ndarray, shapes: np.ndarray) -> np.ndarray:
    """(n, k) matrix of log beta densities for every sample/component pair."""
    a = shapes[:, 0]
    b = shapes[:, 1]
    with np.errstate(invalid="ignore"):
        out = beta_log_pdf_terms(log_x[:, None], log_1mx[:, None], a[None, :], b[None, :])
    # 0 * log(0) at an endpoint is 0 for unit exponents
    return np.where(np.isnan(out), beta_log_pdf_terms(0.0, 0.0, a, b)[None, :], out)


def component_pdfs(x: np.ndarray, shapes: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        lx, l1x = np.log(x), np.log1p(-x)
    return np.exp(component_log_pdfs(np.atleast_1d(lx), np.atleast_1d(l1x), shapes))


def mixture_pdf(x, psi: MixtureParams):
    """Evaluate the mixture density at ``x`` (scalar or array)."""
    arr = np.asarray(x, dtype=float)
    terms = component_pdfs(arr.reshape(-1), psi.shapes) * psi.weights[None, :]
    # summing in sorted order makes the value independent of component order
    vals = np.sort(terms, axis=1).sum(axis=1)
    vals = np.where((arr.reshape(-1) < 0.0) | (arr.reshape(-1) > 1.0), 0.0, vals)
    if arr.ndim == 0:
        return float(vals[0])
    return vals.reshape(arr.shape)


def mixture_density(psi: MixtureParams) -> DensityHandle:
    weights = psi.weights
    shapes = psi.shapes

    def _sampler(rng, n):
        labels = rng.choice(psi.k, size=n, p=weights)
        out = np.empty(n)
        for j in range(psi.k):
            idx = np.flatnonzero(labels == j)
            out[idx] = sample_beta(rng, shapes[j, 0], shapes[j, 1], idx.size)
        return out

    lo = 1.0 if all(c.a == 1.0 and c.b == 1.0 for c in psi.components) else 0.0
    return DensityHandle(
        kind="mixture",
        pdf=lambda x: mixture_pdf(x, psi),
        breakpoints=BETA_BREAKPOINTS,
        sup_bound=psi.sup_bound(),
        inf_bound=lo,
        sampler=_sampler,
        params=psi,
        label="mix:" + psi.to_csv(),
    )


_NAMED = {
    "f1": "target_f1_density",
    "f2": "target_f2_density",
    "uniform": "uniform_density",
    "arcsine": "arcsine_density",
}


class DensitySpecError(ValueError):
    """A density spec string could not be parsed."""


def parse_density(spec: str) -> DensityHandle:
    """Build a handle from ``f1``, ``f2``, ``uniform``, ``arcsine``, ``beta:a,b``
    or ``mix:k,pi_1..pi_k,a_1,b_1,...``."""
    from . import densities

    text = spec.strip()
    if text in _NAMED:
        return getattr(densities, _NAMED[text])()
    kind, sep, rest = text.partition(":")
    if not sep:
        raise DensitySpecError(f"unknown density {spec!r}")
    try:
        if kind == "beta":
            parts = [float(v) for v in rest.split(",")]
            if len(parts) != 2:
                raise DensitySpecError(f"beta needs two shapes, got {len(parts)} in {spec!r}")
            return densities.beta_density(tuple(parts))
        if kind == "mix":
            return mixture_density(MixtureParams.from_csv(rest))
    except DensitySpecError:
        raise
    except ValueError as exc:
        raise DensitySpecError(f"bad density {spec!r}: {exc}") from None
    raise DensitySpecError(f"unknown density kind {kind!r}")
