"""Accuracy-vs-budget panels and posterior corner plots."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .results import t_interval

REFERENCE_COLOR = "black"
MODEL_COLORS = plt.rcParams["axes.prop_cycle"].by_key()["color"]
PNG_METADATA = {"Software": None}  # keep renders byte-reproducible


def build_c2st_figure(results, task):
    """One panel: mean folded C2ST per model against budget on a log axis,
    with a 95% t-interval band wherever more than one seed is available."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for i, model in enumerate(results.models):
        budgets = results.budgets(task, model)
        if not budgets:
            continue
        means, los, his = [], [], []
        for budget in budgets:
            seed_means = list(results.seed_means(task, model, budget).values())
            mean, lo, hi = t_interval(seed_means)
            means.append(mean)
            los.append(lo)
            his.append(hi)
        color = MODEL_COLORS[i % len(MODEL_COLORS)]
        ax.plot(budgets, means, "o-", color=color, label=model)
        if any(hi > lo for lo, hi in zip(los, his)):
            ax.fill_between(budgets, los, his, color=color, alpha=0.2, lw=0)
    ax.set_xscale("log")
    ax.set_ylim(0.5, 1.0)
    ax.set_xlabel("simulation budget")
    ax.set_ylabel("C2ST accuracy")
    ax.set_title(task)
    ax.legend()
    fig.tight_layout()
    return fig


def plot_c2st(results, out_dir):
    """Write one accuracy-vs-budget panel per task; returns the file paths."""
    if not results.rows:
        raise ValueError("empty results table")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for task in results.tasks:
        fig = build_c2st_figure(results, task)
        path = out_dir / f"c2st_{task}.png"
        fig.savefig(path, dpi=150, metadata=PNG_METADATA)
        plt.close(fig)
        written.append(path)
    return written


def _panel_grid(dim):
    fig, axes = plt.subplots(dim, dim, figsize=(1.8 * dim, 1.8 * dim),
                             squeeze=False)
    for i in range(dim):
        for j in range(dim):
            if j > i:
                axes[i][j].set_visible(False)
            else:
                axes[i][j].set_xticks([])
                axes[i][j].set_yticks([])
    return fig, axes


def _density_contour(ax, xs, ys, color, bins=40):
    hist, xe, ye = np.histogram2d(xs, ys, bins=bins)
    cx = 0.5 * (xe[:-1] + xe[1:])
    cy = 0.5 * (ye[:-1] + ye[1:])
    if hist.max() <= 0:
        return
    levels = np.asarray([0.1, 0.4, 0.7]) * hist.max()
    ax.contour(cx, cy, hist.T, levels=levels, colors=color, linewidths=1.0)


def build_corner_figure(reference, surrogates):
    """Pairwise contour grid: reference in a fixed color, each surrogate
    sample set overlaid in its own color.

    ``surrogates`` maps a label to an (n, dim) array sharing the reference's
    dimension.
    """
    reference = np.asarray(reference, dtype=np.float64)
    dim = reference.shape[1]
    for name, s in surrogates.items():
        if np.asarray(s).shape[1] != dim:
            raise ValueError(f"sample set {name!r} does not share dimension {dim}")
    fig, axes = _panel_grid(dim)
    layers = [("reference", reference, REFERENCE_COLOR)]
    layers += [(name, np.asarray(s, dtype=np.float64),
                MODEL_COLORS[k % len(MODEL_COLORS)])
               for k, (name, s) in enumerate(sorted(surrogates.items()))]
    for name, samples, color in layers:
        for i in range(dim):
            axes[i][i].hist(samples[:, i], bins=40, histtype="step",
                            color=color, density=True)
            for j in range(i):
                _density_contour(axes[i][j], samples[:, j], samples[:, i], color)
    handles = [plt.Line2D([], [], color=c, label=n) for n, _, c in layers]
    fig.legend(handles=handles, loc="upper right")
    return fig


def corner_plot(reference, surrogates, out_path):
    fig = build_corner_figure(reference, surrogates)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=120, metadata=PNG_METADATA)
    plt.close(fig)
    return out_path
