"""Figure rendering for the comparison and selection reports.

Figures are written next to the delimited output of the command that
produced them.  matplotlib is imported lazily with the Agg backend so the
library works headless and stays cheap to import.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def save_metric_by_method(
    per_method: Mapping[str, Sequence[float]],
    path: str | Path,
    metric_label: str,
    title: str,
) -> None:
    """Box plot of one metric's per-run values, one box per method."""
    plt = _plt()
    methods = list(per_method)
    data = [[v for v in per_method[mth] if v is not None and math.isfinite(v)]
            for mth in methods]
    fig, ax = plt.subplots(figsize=(1.6 + 1.1 * len(methods), 4.0))
    ax.boxplot(data, tick_labels=methods, showmeans=True)
    for i, vals in enumerate(data, start=1):
        ax.plot([i] * len(vals), vals, "o", color="tab:blue", alpha=0.45, ms=4)
    ax.set_ylabel(metric_label)
    ax.set_title(title)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_front(
    front_points: Sequence[tuple[float, float]],
    knee: tuple[float, float],
    path: str | Path,
) -> None:
    """Scatter of the final front in objective space with the knee marked."""
    plt = _plt()
    finite = [(g, l) for g, l in front_points if math.isfinite(l)]
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    if finite:
        xs, ys = zip(*sorted(finite))
        ax.plot(xs, ys, "o-", color="tab:blue", ms=4, label="front")
    if math.isfinite(knee[1]):
        ax.plot([knee[0]], [knee[1]], "*", color="tab:red", ms=14, label="knee")
    ax.set_xlabel("subset Gini")
    ax.set_ylabel("log geometric diversity")
    ax.set_title("final non-dominated front")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_convergence(history, path: str | Path) -> None:
    """Best objective values per generation, twin axes."""
    plt = _plt()
    gens = [h.generation for h in history]
    best_gini = [h.best_gini for h in history]
    best_lgd = [h.best_log_gd if math.isfinite(h.best_log_gd) else None for h in history]
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.plot(gens, best_gini, color="tab:blue", label="best subset Gini")
    ax.set_xlabel("generation")
    ax.set_ylabel("subset Gini", color="tab:blue")
    ax2 = ax.twinx()
    if any(v is not None for v in best_lgd):
        ax2.plot(gens, best_lgd, color="tab:orange", label="best log GD")
        ax2.set_ylabel("log geometric diversity", color="tab:orange")
    ax.set_title("search convergence")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
