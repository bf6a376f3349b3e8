"""Simulation harness for the rate experiments.

For every (k, n, l) triple of a plan we draw ``n`` points from the target and
``n`` from the lifting density, fit a k-component h-MLLE, and record

    K = -int (f + h) log(f_fit + h)

so that ``KL_h(f || f_fit) = entropy_constant + K``.

Random numbers are common across cells: replicate ``l`` uses the same data
for every k, and its size-n sample is the first n points of one long
sequence, drawn in chunks of ``CHUNK`` with one stream per chunk. Each cell
still sees an i.i.d. sample, but differences between neighbouring cells are
no longer swamped by independent sampling noise. The MM restarts of each
triple draw from a separate stream keyed by (k, n, l). Nothing depends on
scheduling or worker count.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .divergence import lifted_cross_entropy, lifted_entropy_constant
from .estimation import MMConfig, mm_fit
from .mixture import mixture_density, parse_density
from .numerics import QuadratureSpec

log = logging.getLogger(__name__)

RESULTS_HEADER = ["experiment", "k", "n", "l", "seed", "K", "final_objective", "iterations"]

DESK_N = (2 ** 10, 2 ** 11, 2 ** 12, 2 ** 13)
DESK_K = (2, 3, 4, 5, 6)
PAPER_N = tuple(2 ** p for p in range(10, 16))
PAPER_K = tuple(range(2, 9))

_EXPERIMENTS = {"E1": ("f1", "arcsine"), "E2": ("f2", "uniform")}
CHUNK = 1024
_ROLE_X, _ROLE_Y = 0, 1


class ScenarioError(RuntimeError):
    def __init__(self, k, n, l, cause):
        super().__init__(f"scenario k={k} n={n} l={l} failed: {cause}")
        self.k, self.n, self.l, self.cause = k, n, l, cause


class PlanError(RuntimeError):
    def __init__(self, failures):
        super().__init__(f"{len(failures)} scenario(s) failed: "
                         + ", ".join(f"(k={e.k}, n={e.n}, l={e.l})" for e in failures))
        self.failures = failures


@dataclass(frozen=True)
class ExperimentPlan:
    """A (k, n) grid with ``replicates`` replicates per cell.

    ``target`` and ``lifting`` are density spec strings (see
    :func:`liftedmix.mixture.parse_density`) so plans pickle cleanly for
    worker processes.
    """

    experiment_id: str = "E2"
    target: str = "f2"
    lifting: str = "uniform"
    n_values: tuple[int, ...] = DESK_N
    k_values: tuple[int, ...] = DESK_K
    replicates: int = 10
    master_seed: int = 20240601
    mm_config: MMConfig = field(default_factory=MMConfig)
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(v) for v in self.n_values))
        object.__setattr__(self, "k_values", tuple(int(v) for v in self.k_values))
        for name in ("n_values", "k_values"):
            vals = getattr(self, name)
            if not vals or any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"{name} must be non-empty and strictly increasing")
            if vals[0] < 1:
                raise ValueError(f"{name} must be positive")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")

    @classmethod
    def standard(cls, experiment_id: str, scale: str = "desk", **overrides) -> "ExperimentPlan":
        """E1 (f1 with arcsine lifting) or E2 (f2 with uniform lifting) at desk or paper scale."""
        if experiment_id not in _EXPERIMENTS:
            raise ValueError(f"unknown experiment {experiment_id!r}")
        target, lifting = _EXPERIMENTS[experiment_id]
        if scale == "desk":
            grid = dict(n_values=DESK_N, k_values=DESK_K, replicates=10)
        elif scale == "paper":
            grid = dict(n_values=PAPER_N, k_values=PAPER_K, replicates=50)
        else:
            raise ValueError(f"unknown scale {scale!r}")
        grid.update(overrides)
        return cls(experiment_id=experiment_id, target=target, lifting=lifting, **grid)

    def triples(self) -> list[tuple[int, int, int]]:
        return [(k, n, l) for k in self.k_values for n in self.n_values for l in range(self.replicates)]


@dataclass(frozen=True)
class ScenarioResult:
    experiment: str
    k: int
    n: int
    l: int
    seed: int
    K: float
    final_objective: float
    iterations: int

    def to_row(self) -> list[str]:
        return [self.experiment, str(self.k), str(self.n), str(self.l), str(self.seed),
                format(self.K, ".17g"), format(self.final_objective, ".17g"), str(self.iterations)]

    @classmethod
    def from_row(cls, row: dict) -> "ScenarioResult":
        return cls(row["experiment"], int(row["k"]), int(row["n"]), int(row["l"]), int(row["seed"]),
                   float(row["K"]), float(row["final_objective"]), int(row["iterations"]))


def derive_seed(master_seed: int, tag: str, k: int, n: int, l: int) -> int:
    """64-bit stream id for the MM restarts of one triple, a hash of (master seed, tag, k, n, l)."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(zlib.crc32(tag.encode()), k, n, l))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(hi) << 32 | int(lo)


def _chunked_sample(density, master_seed: int, tag: str, l: int, role: int, n: int) -> np.ndarray:
    """First ``n`` points of replicate ``l``'s sequence for one role (X or Y)."""
    parts = []
    for c, start in enumerate(range(0, n, CHUNK)):
        ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(zlib.crc32(tag.encode()), l, role, c))
        parts.append(density.sample(np.random.default_rng(ss), min(CHUNK, n - start)))
    return np.concatenate(parts) if parts else np.empty(0)


def scenario_sample(plan: "ExperimentPlan", n: int, l: int, target=None, lifting=None):
    """The (xs, ys) pair of replicate ``l`` at sample size ``n``."""
    f = target if target is not None else parse_density(plan.target)
    h = lifting if lifting is not None else parse_density(plan.lifting)
    xs = _chunked_sample(f, plan.master_seed, plan.experiment_id, l, _ROLE_X, n)
    ys = _chunked_sample(h, plan.master_seed, plan.experiment_id, l, _ROLE_Y, n)
    return xs, ys


def run_scenario(plan: ExperimentPlan, k: int, n: int, l: int) -> ScenarioResult:
    if k not in plan.k_values or n not in plan.n_values or not 0 <= l < plan.replicates:
        raise ValueError(f"(k={k}, n={n}, l={l}) outside the plan")
    try:
        f = parse_density(plan.target)
        h = parse_density(plan.lifting)
        seed = derive_seed(plan.master_seed, plan.experiment_id, k, n, l)
        xs, ys = scenario_sample(plan, n, l, f, h)
        fit = mm_fit(h, xs, ys, k, plan.mm_config, np.random.default_rng(seed))
        K = lifted_cross_entropy(f, mixture_density(fit.psi), h, plan.quadrature)
        if not np.isfinite(K):
            raise FloatingPointError("K is not finite")
    except Exception as exc:  # attach scenario context to whatever went wrong
        raise ScenarioError(k, n, l, exc) from exc
    return ScenarioResult(plan.experiment_id, k, n, l, seed, K, fit.objective, fit.iterations)


def entropy_constant(plan: ExperimentPlan) -> float:
    """``int (f + h) log(f + h)`` for the plan's target and lifting density."""
    return lifted_entropy_constant(parse_density(plan.target), parse_density(plan.lifting), plan.quadrature)


def _run_one(args):
    plan, k, n, l = args
    try:
        return run_scenario(plan, k, n, l)
    except ScenarioError as exc:
        return exc


def format_results(rows: Iterable[ScenarioResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULTS_HEADER)
    for r in sorted(rows, key=lambda r: (r.k, r.n, r.l)):
        w.writerow(r.to_row())
    return buf.getvalue()


def read_results(path) -> list[ScenarioResult]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULTS_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [ScenarioResult.from_row(row) for row in reader]


def _read_partial(path: Path) -> list[ScenarioResult]:
    """Rows of an interrupted results file; a truncated last line is dropped."""
    if not path.exists():
        return []
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULTS_HEADER:
            return []
        for row in reader:
            try:
                out.append(ScenarioResult.from_row(row))
            except (TypeError, ValueError, KeyError):
                break
    return out


def run_plan(plan: ExperimentPlan, worker_count: int = 1, results_path: Optional[os.PathLike] = None,
             progress=None) -> list[ScenarioResult]:
    """Run every (k, n, l) triple of ``plan``.

    With ``results_path`` rows are appended as they finish and triples already
    present in the file are skipped, so an interrupted sweep resumes where it
    stopped. The file is rewritten in (k, n, l) order at the end. Failing
    triples are collected and reported together after the others finish.
    """
    if worker_count < 1:
        raise ValueError("worker_count must be >= 1")
    done: dict[tuple[int, int, int], ScenarioResult] = {}
    path = Path(results_path) if results_path is not None else None
    if path is not None:
        for r in _read_partial(path):
            if r.experiment == plan.experiment_id:
                done[(r.k, r.n, r.l)] = r
        # rewrite so a torn trailing line never precedes new rows
        path.write_text(format_results(done.values()), encoding="utf-8")
    todo = [t for t in plan.triples() if t not in done]
    log.info("%s: %d scenarios to run (%d already done)", plan.experiment_id, len(todo), len(done))

    failures: list[ScenarioError] = []
    sink = open(path, "a", newline="", encoding="utf-8") if path is not None else None
    try:
        writer = csv.writer(sink, lineterminator="\n") if sink is not None else None
        args = [(plan, k, n, l) for k, n, l in todo]
        if worker_count == 1:
            results = map(_run_one, args)
            pool = None
        else:
            pool = ProcessPoolExecutor(max_workers=worker_count)
            results = pool.map(_run_one, args, chunksize=1)
        try:
            for item in results:
                if isinstance(item, ScenarioError):
                    log.error("%s", item)
                    failures.append(item)
                    continue
                done[(item.k, item.n, item.l)] = item
                if writer is not None:
                    writer.writerow(item.to_row())
                    sink.flush()
                if progress is not None:
                    progress(item)
        finally:
            if pool is not None:
                pool.shutdown()
    finally:
        if sink is not None:
            sink.close()

    ordered = [done[t] for t in plan.triples() if t in done]
    if path is not None:
        path.write_text(format_results(ordered), encoding="utf-8")
        meta = {"experiment": plan.experiment_id, "target": plan.target, "lifting": plan.lifting,
                "master_seed": plan.master_seed, "entropy_constant": entropy_constant(plan),
                "mm_config": asdict(plan.mm_config)}
        path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                                  encoding="utf-8")
    if failures:
        raise PlanError(failures)
    return ordered


def mean_table(rows: Iterable[ScenarioResult]) -> tuple[list[int], list[int], np.ndarray]:
    """Mean K per (k, n) cell: returns (k values, n values, matrix indexed [k, n])."""
    rows = list(rows)
    ks = sorted({r.k for r in rows})
    ns = sorted({r.n for r in rows})
    sums = np.zeros((len(ks), len(ns)))
    counts = np.zeros((len(ks), len(ns)))
    for r in rows:
        i, j = ks.index(r.k), ns.index(r.n)
        sums[i, j] += r.K
        counts[i, j] += 1
    with np.errstate(invalid="ignore"):
        return ks, ns, sums / counts


def count_monotone_violations(means: np.ndarray) -> tuple[list[int], list[int]]:
    """Adjacent increases along each row (in n) and each column (in k)."""
    rows = [int(np.sum(np.diff(means[i, :]) > 0.0)) for i in range(means.shape[0])]
    cols = [int(np.sum(np.diff(means[:, j]) > 0.0)) for j in range(means.shape[1])]
    return rows, cols
