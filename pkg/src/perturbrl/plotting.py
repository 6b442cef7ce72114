"""Figure rendering. Every figure is written as SVG together with a tidy CSV
holding exactly the plotted numbers, so results can be re-inspected without
re-running experiments."""

from __future__ import annotations

import csv

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _tidy_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _csv_path(svg_path):
    return svg_path[:-4] + ".csv" if svg_path.endswith(".svg") else svg_path + ".csv"


def curve(svg_path, rows, ylabel="normalized return"):
    """Learning curve: mean with a one-standard-deviation band across seeds.

    ``rows`` are (step, mean, std, n_seeds) tuples.
    """
    steps = [r[0] for r in rows]
    means = np.array([r[1] for r in rows])
    stds = np.array([r[2] for r in rows])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, means, marker="o", markersize=3)
    ax.fill_between(steps, means - stds, means + stds, alpha=0.25)
    ax.set_xlabel("environment steps")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(svg_path)
    plt.close(fig)
    _tidy_csv(_csv_path(svg_path), ["step", "mean", "std", "n_seeds"], rows)


def sweep(svg_path, records, metric="mean_return"):
    """Robustness curve: aggregate metric versus disturbance level, one line
    per agent label."""
    from .harness import EvalSummary

    by_agent = {}
    for rec in records:
        s = EvalSummary(rec.returns, rec.lengths, rec.rmses)
        by_agent.setdefault(rec.agent, []).append(
            (rec.test_level, getattr(s, metric)))
    fig, ax = plt.subplots(figsize=(6, 4))
    tidy = []
    for agent, points in sorted(by_agent.items()):
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points],
                marker="o", markersize=3, label=agent)
        tidy.extend((agent, lvl, val) for lvl, val in points)
    ax.set_xlabel("disturbance level")
    ax.set_ylabel(metric.replace("_", " "))
    ax.grid(True, alpha=0.3)
    if len(by_agent) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(svg_path)
    plt.close(fig)
    _tidy_csv(_csv_path(svg_path), ["agent", "test_level", metric], tidy)


def heatmap(svg_path, records, metric="mean_return"):
    """Train-level by test-level grid with the metric value printed in each cell."""
    from .harness import EvalSummary

    train_levels = sorted({rec.train_level for rec in records})
    test_levels = sorted({rec.test_level for rec in records})
    grid = np.full((len(train_levels), len(test_levels)), np.nan)
    for rec in records:
        i = train_levels.index(rec.train_level)
        j = test_levels.index(rec.test_level)
        if not rec.failed:
            s = EvalSummary(rec.returns, rec.lengths, rec.rmses)
            grid[i, j] = getattr(s, metric)
    fig, ax = plt.subplots(figsize=(1.2 * len(test_levels) + 2,
                                    0.9 * len(train_levels) + 2))
    im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis")
    ax.set_xticks(range(len(test_levels)), [f"{v:g}" for v in test_levels])
    ax.set_yticks(range(len(train_levels)), [f"{v:g}" for v in train_levels])
    ax.set_xlabel("test level")
    ax.set_ylabel("train level")
    vmin, vmax = np.nanmin(grid), np.nanmax(grid)
    mid = vmin + 0.5 * (vmax - vmin)
    for i in range(len(train_levels)):
        for j in range(len(test_levels)):
            if np.isnan(grid[i, j]):
                ax.text(j, i, "fail", ha="center", va="center", color="red")
            else:
                color = "black" if grid[i, j] > mid else "white"
                ax.text(j, i, f"{grid[i, j]:.3f}", ha="center", va="center",
                        color=color, fontsize=8)
    fig.colorbar(im, ax=ax, label=metric.replace("_", " "))
    fig.tight_layout()
    fig.savefig(svg_path)
    plt.close(fig)
    tidy = [(train_levels[i], test_levels[j], grid[i, j])
            for i in range(len(train_levels)) for j in range(len(test_levels))]
    _tidy_csv(_csv_path(svg_path), ["train_level", "test_level", metric], tidy)
