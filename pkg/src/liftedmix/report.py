"""Mean-K table and heatmap for a results file.

The heatmap draws one rectangle per (k, n) cell. Cell colours come from a
linear ramp: the mean K of a cell is mapped to ``t = (K - K_min) / (K_max -
K_min)`` and ``t`` is looked up in the ``viridis`` colormap, so the lowest
mean is dark purple and the highest is yellow. A constant table maps every
cell to ``t = 0.5``.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from .experiments import ScenarioResult, mean_table  # noqa: E402

COLORMAP = "viridis"


def format_mean_table(ks: Sequence[int], ns: Sequence[int], means: np.ndarray) -> str:
    """CSV with one row per k and one column per n."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k"] + [f"n={n}" for n in ns])
    for i, k in enumerate(ks):
        w.writerow([str(k)] + ["" if np.isnan(v) else format(float(v), ".17g") for v in means[i]])
    return buf.getvalue()


def color_ramp(values: np.ndarray) -> np.ndarray:
    """RGBA colours for ``values`` on the linear ramp described in the module docs."""
    values = np.asarray(values, dtype=float)
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        t = np.full(values.shape, 0.5)
    else:
        lo, hi = float(finite.min()), float(finite.max())
        t = np.full(values.shape, 0.5) if hi == lo else (values - lo) / (hi - lo)
    return matplotlib.colormaps[COLORMAP](np.clip(np.nan_to_num(t, nan=0.5), 0.0, 1.0))


def render_heatmap(ks: Sequence[int], ns: Sequence[int], means: np.ndarray, path, title: str = "") -> None:
    """Write the mean-K heatmap as SVG. Rectangles carry ids ``cell_k{k}_n{n}``."""
    plt.rcParams["svg.hashsalt"] = "liftedmix"
    colors = color_ramp(means)
    fig, ax = plt.subplots(figsize=(1.2 * len(ns) + 2.5, 0.8 * len(ks) + 1.5))
    for i, k in enumerate(ks):
        for j, n in enumerate(ns):
            ax.add_patch(Rectangle((j, i), 1.0, 1.0, facecolor=colors[i, j], edgecolor="white",
                                   gid=f"cell_k{k}_n{n}"))
            if np.isfinite(means[i, j]):
                t = colors[i, j][:3] @ np.array([0.299, 0.587, 0.114])
                ax.text(j + 0.5, i + 0.5, f"{means[i, j]:.4f}", ha="center", va="center", fontsize=7,
                        color="black" if t > 0.5 else "white")
    ax.set_xlim(0, len(ns))
    ax.set_ylim(0, len(ks))
    ax.set_xticks(np.arange(len(ns)) + 0.5, [str(n) for n in ns])
    ax.set_yticks(np.arange(len(ks)) + 0.5, [str(k) for k in ks])
    ax.set_xlabel("n")
    ax.set_ylabel("k")
    finite = means[np.isfinite(means)]
    if finite.size:
        sm = plt.cm.ScalarMappable(cmap=COLORMAP,
                                   norm=matplotlib.colors.Normalize(finite.min(), max(finite.max(), finite.min() + 1e-300)))
        fig.colorbar(sm, ax=ax, label="mean K")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_report(rows: Iterable[ScenarioResult], out_dir, stem: str = "report") -> tuple[Path, Path]:
    """Write ``<stem>_means.csv`` and ``<stem>_heatmap.svg`` under ``out_dir``."""
    rows = list(rows)
    if not rows:
        raise ValueError("no results to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ks, ns, means = mean_table(rows)
    table = out / f"{stem}_means.csv"
    table.write_text(format_mean_table(ks, ns, means), encoding="utf-8")
    svg = out / f"{stem}_heatmap.svg"
    experiments = sorted({r.experiment for r in rows})
    render_heatmap(ks, ns, means, svg, title=f"mean K ({', '.join(experiments)})")
    return table, svg
