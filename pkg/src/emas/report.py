"""Figure rendering from trace CSV data.

Produces the three comparison views as PNG files next to the CSVs: best
fitness ever against wall time with 95% confidence stripes, reproductions
per second per model, and best fitness against cumulative reproductions.
Fitness axes are log-scaled with a 1e-16 offset applied at plot time only;
the CSVs always hold raw values.
"""

from __future__ import annotations

import logging
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .metrics import RunTrace, fitness_vs_reproductions, mean_ci, step_sample

logger = logging.getLogger(__name__)

LOG_OFFSET = 1e-16

MODEL_COLORS = {"sequential": "#1f77b4", "hybrid": "#ff7f0e", "concurrent": "#2ca02c"}


def _band(series_list: list[list[tuple[int, float]]], grid: list[int]) -> tuple[list[float], list[float]]:
    means, half_widths = [], []
    for t in grid:
        mean, hw = mean_ci([step_sample(s, t) for s in series_list])
        means.append(mean)
        half_widths.append(hw)
    return means, half_widths


def _grid(end: int, points: int = 200) -> list[int]:
    if end <= 0:
        return [0]
    step = max(1, end // points)
    return list(range(0, end + step, step))


def render_figures(out_dir: str, traces_by_model: dict[str, list[RunTrace]]) -> list[str]:
    """Render all figures for the given traces; returns the written paths."""
    paths = [
        _render_best_over_time(out_dir, traces_by_model),
        _render_reproductions_per_sec(out_dir, traces_by_model),
        _render_fitness_vs_reproductions(out_dir, traces_by_model),
    ]
    return [p for p in paths if p is not None]


def _render_best_over_time(out_dir: str, traces_by_model: dict[str, list[RunTrace]]) -> str | None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    drew = False
    for model, traces in sorted(traces_by_model.items()):
        series = [t.best_fitness_series() for t in traces if t.best_fitness_series()]
        if not series:
            continue
        end = max(t.duration_ms() for t in traces)
        grid = _grid(end)
        means, hws = _band(series, grid)
        xs = [t / 1000.0 for t in grid]
        ys = [m + LOG_OFFSET for m in means]
        color = MODEL_COLORS.get(model)
        ax.plot(xs, ys, label=f"{model} (n={len(series)})", color=color)
        if len(series) > 1:
            low = [max(LOG_OFFSET, m - h + LOG_OFFSET) for m, h in zip(means, hws)]
            high = [m + h + LOG_OFFSET for m, h in zip(means, hws)]
            ax.fill_between(xs, low, high, alpha=0.2, color=color)
        drew = True
    if not drew:
        plt.close(fig)
        return None
    ax.set_xlabel("time [s]")
    ax.set_ylabel(f"best fitness ever (+{LOG_OFFSET:g})")
    ax.set_yscale("log")
    ax.legend()
    ax.set_title("Best fitness ever over time (95% CI stripes)")
    fig.tight_layout()
    path = os.path.join(out_dir, "best_fitness_vs_time.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _render_reproductions_per_sec(out_dir: str, traces_by_model: dict[str, list[RunTrace]]) -> str | None:
    models, means, hws = [], [], []
    for model, traces in sorted(traces_by_model.items()):
        values = [t.reproductions_per_sec() for t in traces]
        if not values:
            continue
        mean, hw = mean_ci(values)
        models.append(model)
        means.append(mean)
        hws.append(hw)
    if not models:
        return None
    fig, ax = plt.subplots(figsize=(6, 4))
    colors = [MODEL_COLORS.get(m, "#555555") for m in models]
    ax.bar(models, means, yerr=hws, capsize=6, color=colors)
    ax.set_ylabel("reproductions / s")
    ax.set_title("Reproduction throughput (mean over runs, 95% CI)")
    fig.tight_layout()
    path = os.path.join(out_dir, "reproductions_per_sec.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _render_fitness_vs_reproductions(out_dir: str, traces_by_model: dict[str, list[RunTrace]]) -> str | None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    drew = False
    for model, traces in sorted(traces_by_model.items()):
        series = [fitness_vs_reproductions(t) for t in traces]
        series = [s for s in series if s]
        if not series:
            continue
        end = max(s[-1][0] for s in series)
        grid = _grid(end)
        means, hws = _band(series, grid)
        ys = [m + LOG_OFFSET for m in means]
        color = MODEL_COLORS.get(model)
        ax.plot(grid, ys, label=f"{model} (n={len(series)})", color=color)
        if len(series) > 1:
            low = [max(LOG_OFFSET, m - h + LOG_OFFSET) for m, h in zip(means, hws)]
            high = [m + h + LOG_OFFSET for m, h in zip(means, hws)]
            ax.fill_between(grid, low, high, alpha=0.2, color=color)
        drew = True
    if not drew:
        plt.close(fig)
        return None
    ax.set_xlabel("cumulative reproductions")
    ax.set_ylabel(f"best fitness ever (+{LOG_OFFSET:g})")
    ax.set_yscale("log")
    ax.legend()
    ax.set_title("Best fitness ever over reproductions (95% CI stripes)")
    fig.tight_layout()
    path = os.path.join(out_dir, "fitness_vs_reproductions.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
