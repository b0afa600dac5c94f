"""PNG figures for run and sweep directories, rendered from the summary dict."""

from __future__ import annotations

import json
import os

from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .experiment import FIGURE_DIR

_META = {"Software": None}  # keep PNG bytes free of version strings


def _new(ncols: int = 1) -> tuple[Figure, list]:
    fig = Figure(figsize=(4.2 * ncols, 3.2), dpi=100, layout="constrained")
    FigureCanvasAgg(fig)
    axes = fig.subplots(1, ncols, squeeze=False)[0]
    for ax in axes:
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
        ax.grid(alpha=0.3, lw=0.5)
    return fig, list(axes)


def _save(fig: Figure, directory: str, name: str) -> str:
    path = os.path.join(directory, FIGURE_DIR, name)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    fig.savefig(path, metadata=_META)
    return path


def plot_run(summary: dict, directory: str) -> str:
    fig, (a, b) = _new(2)
    steps = summary["steps"]
    a.plot(steps, summary["mean_conf_by_step"], "o-", ms=3, color="C3")
    a.set(xlabel="step n", ylabel="mean target confidence", ylim=(-0.02, 1.02))
    b.plot(steps, summary["mean_similarity_by_step"], "s-", ms=3, color="C0")
    b.set(xlabel="step n", ylabel="mean similarity to source")
    fig.suptitle(f"{summary['method']}: {summary['n_runs']} runs", fontsize=10)
    return _save(fig, directory, "trajectory.png")


def plot_sweep(summary: dict, directory: str) -> str:
    fig, (a, b) = _new(2)
    x = [float(v) for v in summary["values"]]
    a.plot(x, summary["mean_final_conf"], "o-", ms=4, color="C3")
    a.set(xlabel=summary["grid"], ylabel="final confidence", ylim=(-0.02, 1.02))
    b.plot(x, summary["mean_final_similarity"], "s-", ms=4, color="C0")
    b.set(xlabel=summary["grid"], ylabel="final similarity")
    fig.suptitle(f"{summary['method']} sweep over {summary['grid']}", fontsize=10)
    return _save(fig, directory, f"sweep_{summary['grid']}.png")


def plot_bounds(bounds: dict, directory: str) -> str:
    fig, (ax,) = _new(1)
    run = bounds["runs"][0]
    n = range(1, len(run["observed"]) + 1)
    ax.semilogy(n, run["envelope"], "-", color="0.4", label="envelope")
    observed = [max(v, 1e-300) for v in run["observed"]]
    ax.semilogy(n, observed, ".", ms=3, color="C3", label="observed")
    ax.set(xlabel="step n", ylabel="step difference norm")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, directory, "bounds.png")


def render_figures(directory: str, summary: dict) -> list[str]:
    """Write every figure that applies to ``directory``; returns the paths."""
    paths = []
    if summary["kind"] == "run":
        paths.append(plot_run(summary, directory))
    else:
        paths.append(plot_sweep(summary, directory))
    bounds = os.path.join(directory, "bound_report.json")
    if os.path.isfile(bounds):
        with open(bounds) as fh:
            paths.append(plot_bounds(json.load(fh), directory))
    return paths
