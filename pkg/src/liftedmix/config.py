"""Run configuration for the command line.

A config file is a YAML (or JSON) mapping with the sections below. Every key
is optional; unknown keys are rejected so a typo never silently falls back to
a default.

    seed: 20240601          # master seed, unsigned 64-bit
    out: out                # output directory
    workers: 1              # worker processes for experiment sweeps
    plan:
      experiment: E2        # E1 (f1, arcsine h) or E2 (f2, uniform h)
      scale: desk           # desk or paper grid
      n_values: null        # override the grid's sample sizes
      k_values: null        # override the grid's component counts
      replicates: null      # override the grid's replicate count
    mm:
      max_iters: 500
      rel_tol: 1.0e-8
      restarts: 5
      newton_max_iters: 50
      newton_tol: 1.0e-10
    quadrature:
      points_per_panel: 64
      edge_inset: 1.0e-12
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml

from .estimation import MMConfig
from .experiments import ExperimentPlan


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PlanSection:
    experiment: str = "E2"
    scale: str = "desk"
    n_values: Optional[list[int]] = None
    k_values: Optional[list[int]] = None
    replicates: Optional[int] = None


@dataclass(frozen=True)
class QuadratureSection:
    points_per_panel: int = 64
    edge_inset: float = 1e-12


@dataclass(frozen=True)
class RunConfig:
    seed: int = 20240601
    out: str = "out"
    workers: int = 1
    plan: PlanSection = field(default_factory=PlanSection)
    mm: MMConfig = field(default_factory=MMConfig)
    quadrature: QuadratureSection = field(default_factory=QuadratureSection)

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def experiment_plan(self) -> ExperimentPlan:
        from .numerics import QuadratureSpec

        overrides = {name: getattr(self.plan, name) for name in ("n_values", "k_values", "replicates")
                     if getattr(self.plan, name) is not None}
        quad = QuadratureSpec(points_per_panel=self.quadrature.points_per_panel,
                              edge_inset=self.quadrature.edge_inset)
        return ExperimentPlan.standard(self.plan.experiment, self.plan.scale, master_seed=self.seed,
                                       mm_config=self.mm, quadrature=quad, **overrides)


def _coerce(value, hint, where):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union:  # Optional[...]
        if value is None:
            return None
        return _coerce(value, next(a for a in args if a is not type(None)), where)
    if dataclasses.is_dataclass(hint):
        return _build(hint, value, where)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        return [_coerce(v, args[0], f"{where}[{i}]") for i, v in enumerate(value)]
    if hint is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if hint is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if hint is str and isinstance(value, str):
        return value
    raise ConfigError(f"{where}: expected {getattr(hint, '__name__', hint)}, got {value!r}")


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key(s) {', '.join(map(str, unknown))}")
    kwargs = {name: _coerce(value, hints[name], f"{where}.{name}" if where else name)
              for name, value in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where or 'config'}: {exc}") from None


def parse_config(data) -> RunConfig:
    return _build(RunConfig, {} if data is None else data, "")


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data)


def with_overrides(cfg: RunConfig, **values) -> RunConfig:
    """Copy of ``cfg`` with the non-None top-level ``values`` applied."""
    changes = {k: v for k, v in values.items() if v is not None}
    try:
        return dataclasses.replace(cfg, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
