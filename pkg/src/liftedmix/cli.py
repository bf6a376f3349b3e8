"""Command-line front end.

Exit codes: 0 on success, 2 for unusable input (bad flags, density specs,
config files or data files), 3 for numerical failures.

Density specs: ``f1``, ``f2``, ``uniform``, ``arcsine``, ``beta:A,B`` or
``mix:K,PI_1,..,PI_K,A_1,B_1,..,A_K,B_K``.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, with_overrides
from .divergence import divergence_report
from .estimation import GreedyGrid, LiftedObjective, greedy_fit, mm_fit
from .experiments import ExperimentPlan, read_results, run_plan
from .mixture import DensitySpecError, MixtureParams, parse_density, renormalize_weights
from .numerics import QuadratureSpec
from .regression import PARAM_NAMES, aggregate_means, fit_rate_model, format_fit_report
from .report import write_report

log = logging.getLogger("liftedmix")

EXIT_USAGE = 2
EXIT_NUMERIC = 3
_DEFAULTS = RunConfig()

DENSITY_HELP = ("density spec: f1, f2, uniform, arcsine, beta:A,B or "
                "mix:K,PI_1..PI_K,A_1,B_1,..,A_K,B_K")


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Appends the default unless the help text already states one."""

    def _get_help_string(self, action):
        if "(default:" in (action.help or ""):
            return action.help
        return super()._get_help_string(action)


class UsageError(Exception):
    """Input that cannot be used; reported with exit code 2."""


def _density(spec: str):
    try:
        return parse_density(spec)
    except DensitySpecError as exc:
        raise UsageError(str(exc)) from None


def _resolve(args) -> RunConfig:
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        return with_overrides(cfg, seed=args.seed, out=args.out, workers=args.workers)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def _quadrature(cfg: RunConfig) -> QuadratureSpec:
    return QuadratureSpec(points_per_panel=cfg.quadrature.points_per_panel, edge_inset=cfg.quadrature.edge_inset)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_points(path) -> np.ndarray:
    """One value per line; blank lines and ``#`` comments are skipped."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    vals = []
    for no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip().rstrip(",")
        if not line:
            continue
        try:
            vals.append(float(line))
        except ValueError:
            raise UsageError(f"{path}:{no}: not a number: {line!r}") from None
    arr = np.asarray(vals)
    if arr.size == 0:
        raise UsageError(f"{path}: no data")
    if not np.all((arr >= 0.0) & (arr <= 1.0)):
        raise UsageError(f"{path}: data must lie in [0, 1]")
    return arr


def prune_mixture(psi: MixtureParams, threshold: float) -> MixtureParams:
    """Drop components with weight below ``threshold`` and renormalise."""
    keep = [j for j, w in enumerate(psi.weights) if w >= threshold]
    if not keep:
        keep = [int(np.argmax(psi.weights))]
    if len(keep) == psi.k:
        return psi
    return MixtureParams.from_arrays(renormalize_weights(psi.weights[keep]), psi.shapes[keep])


# commands -----------------------------------------------------------------

def cmd_divergence(args, cfg: RunConfig) -> int:
    f, g, h = _density(args.f), _density(args.g), _density(args.h)
    rep = divergence_report(f, g, h, _quadrature(cfg))
    for name in ("klh", "l1", "l2_sq", "tv"):
        print(f"{name} {getattr(rep, name):.10f}")
    return 0


def cmd_fit(args, cfg: RunConfig) -> int:
    if (args.data is None) == (args.generate is None):
        raise UsageError("give exactly one of --data FILE or --generate SPEC")
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    h = _density(args.lifting)
    rng = np.random.default_rng(cfg.seed)
    if args.data is not None:
        xs = _read_points(args.data)
    else:
        if args.n < 1:
            raise UsageError("--n must be >= 1")
        xs = _density(args.generate).sample(rng, args.n)
    ys = h.sample(rng, xs.size)
    fit = mm_fit(h, xs, ys, args.k, cfg.mm, rng)
    psi = prune_mixture(fit.psi, args.prune) if args.prune > 0.0 else fit.psi
    out = _out_dir(cfg)
    (out / "mixture.csv").write_text(psi.to_csv() + "\n", encoding="utf-8")
    (out / "trace.txt").write_text(fit.trace_text(), encoding="utf-8")
    print(f"objective {fit.objective:.12f}")
    print(f"iterations {fit.iterations}")
    for j, (w, c) in enumerate(zip(psi.weights, psi.components), 1):
        print(f"component {j} weight {w:.6f} a {c.a:.6f} b {c.b:.6f}")
    return 0


def cmd_greedy(args, cfg: RunConfig) -> int:
    f, h = _density(args.target), _density(args.lifting)
    if args.k_max < 1 or args.n_pi < 2 or args.n_theta < 1:
        raise UsageError("need --k-max >= 1, --n-pi >= 2 and --n-theta >= 1")
    if args.empirical_n > 0:
        rng = np.random.default_rng(cfg.seed)
        xs = f.sample(rng, args.empirical_n)
        ys = h.sample(rng, args.empirical_n)
        kappa = LiftedObjective.empirical(f, h, xs, ys)
    else:
        kappa = LiftedObjective.population(f, h, _quadrature(cfg))
    run = greedy_fit(kappa, args.k_max, GreedyGrid.default(args.n_pi, args.n_theta))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "objective", "bound", "pi", "a", "b", "mixture"])
    for s in run.steps:
        w.writerow([s.k, format(s.objective, ".17g"), format(run.bound(s.k), ".17g"), format(s.pi, ".17g"),
                    format(s.theta[0], ".17g"), format(s.theta[1], ".17g"), s.psi.to_csv()])
    (_out_dir(cfg) / "greedy.csv").write_text(buf.getvalue(), encoding="utf-8")
    for s in run.steps:
        print(f"k {s.k} objective {s.objective:.10f} bound {run.bound(s.k):.6g}")
    return 0


def cmd_experiment(args, cfg: RunConfig) -> int:
    plan_cfg = cfg.plan
    changes = {name: getattr(args, name) for name in ("experiment", "scale", "replicates")
               if getattr(args, name) is not None}
    if changes:
        import dataclasses

        cfg = dataclasses.replace(cfg, plan=dataclasses.replace(plan_cfg, **changes))
    try:
        plan: ExperimentPlan = cfg.experiment_plan()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    path = _out_dir(cfg) / f"results_{plan.experiment_id}.csv"

    def progress(r):
        log.info("k=%d n=%d l=%d K=%.6f", r.k, r.n, r.l, r.K)

    rows = run_plan(plan, cfg.workers, path, progress=progress)
    print(f"wrote {len(rows)} rows to {path}")
    return 0


def _load_rows(path):
    try:
        return read_results(path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read results {path}: {exc}") from None


def cmd_regress(args, cfg: RunConfig) -> int:
    results = _load_rows(args.results)
    rows = [(r.k, r.n, r.K) for r in results if r.k >= 2]
    if args.aggregate:
        rows = aggregate_means(rows)
    init = None
    if args.init is not None:
        try:
            init = [float(v) for v in args.init.split(",")]
        except ValueError:
            raise UsageError(f"bad --init {args.init!r}") from None
        if len(init) != len(PARAM_NAMES):
            raise UsageError("--init needs five comma-separated values a0,a1,a2,b1,b2")
    fit = fit_rate_model(rows, init=init)
    text = format_fit_report(fit)
    (_out_dir(cfg) / "fit_report.csv").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0 if fit.converged else EXIT_NUMERIC


def cmd_report(args, cfg: RunConfig) -> int:
    results = _load_rows(args.results)
    table, svg = write_report(results, _out_dir(cfg))
    print(f"wrote {table}")
    print(f"wrote {svg}")
    return 0


# parser -------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--config", metavar="FILE", help="YAML or JSON run config; unknown keys are rejected "
                                                      "(default: none, built-in defaults)")
    g.add_argument("--seed", type=_uint64, metavar="SEED",
                   help=f"master seed, unsigned 64-bit (default: {_DEFAULTS.seed})")
    g.add_argument("--out", metavar="DIR", help=f"output directory (default: {_DEFAULTS.out})")
    g.add_argument("--workers", type=int, metavar="N",
                   help=f"worker processes for experiment sweeps (default: {_DEFAULTS.workers})")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr (default: off)")
    return p


def _uint64(text: str) -> int:
    try:
        v = int(text, 10)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a decimal integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    fmt = _HelpFormatter
    parser = argparse.ArgumentParser(prog="liftedmix", description=__doc__.split("\n\n")[0],
                                     formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("divergence", parents=[common], formatter_class=fmt,
                       help="h-lifted KL, L1, squared L2 and TV between two densities",
                       epilog=DENSITY_HELP)
    p.add_argument("f", help="first density spec")
    p.add_argument("g", help="second density spec")
    p.add_argument("h", help="lifting density spec")
    p.set_defaults(func=cmd_divergence)

    p = sub.add_parser("fit", parents=[common], formatter_class=fmt,
                       help="fit a k-component beta mixture by the MM algorithm", epilog=DENSITY_HELP)
    p.add_argument("--data", metavar="FILE", default=None, help="sample file, one value in [0,1] per line")
    p.add_argument("--generate", metavar="SPEC", default=None, help="draw the sample from this density")
    p.add_argument("--n", type=int, default=10000, help="sample size with --generate")
    p.add_argument("--k", type=int, default=2, help="number of components")
    p.add_argument("--lifting", default="uniform", help="lifting density spec")
    p.add_argument("--prune", type=float, default=0.0,
                   help="drop components with weight below this after fitting (0 keeps all)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("greedy", parents=[common], formatter_class=fmt,
                       help="greedy approximation sequence over a grid of components", epilog=DENSITY_HELP)
    p.add_argument("--target", default="f2", help="target density spec")
    p.add_argument("--lifting", default="uniform", help="lifting density spec")
    p.add_argument("--k-max", type=int, default=6, help="number of greedy steps")
    p.add_argument("--n-pi", type=int, default=101, help="mixing weights on an even grid over [0, 1]")
    p.add_argument("--n-theta", type=int, default=25, help="shape values per axis, log-spaced over [1, 50]")
    p.add_argument("--empirical-n", type=int, default=0,
                   help="use the sample objective with this many draws (0 uses quadrature)")
    p.set_defaults(func=cmd_greedy)

    p = sub.add_parser("experiment", parents=[common], formatter_class=fmt,
                       help="run an E1/E2 sweep and write results_<E>.csv")
    p.add_argument("--experiment", choices=("E1", "E2"), default=None,
                   help=f"experiment id (default: {_DEFAULTS.plan.experiment})")
    p.add_argument("--scale", choices=("desk", "paper"), default=None,
                   help=f"grid size (default: {_DEFAULTS.plan.scale})")
    p.add_argument("--replicates", type=int, default=None,
                   help="replicates per cell (default: 10 at desk scale, 50 at paper scale)")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("regress", parents=[common], formatter_class=fmt,
                       help="fit the rate model to a results file and write fit_report.csv")
    p.add_argument("results", help="results CSV from the experiment command")
    p.add_argument("--aggregate", action="store_true", help="fit to per-cell means instead of all rows")
    p.add_argument("--init", default=None, metavar="A0,A1,A2,B1,B2",
                   help="starting values (default: a0 = min K, unit exponents, a1 and a2 by least squares)")
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("report", parents=[common], formatter_class=fmt,
                       help="mean-K table and SVG heatmap for a results file")
    p.add_argument("results", help="results CSV from the experiment command")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _resolve(args)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, ValueError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
