"""Figure rendering for the report paths.

Each report-producing command can drop matplotlib PNGs next to its CSV/JSON
output: prevalence bar charts per site, correlation heatmaps with the
category totals alongside, bootstrap metric distributions, and per-module
runtime bars. Everything renders off-screen (Agg) straight to files.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import BootstrapReport
from .prevalence import CorrelationMatrix, PrevalenceTable


def _save(fig: plt.Figure, path: Path) -> Path:
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def render_counts_figure(table: PrevalenceTable, polarity: str, path: str | Path) -> Path:
    """Grouped bars of per-category mention counts, one group color per site."""
    counts = table.counts(polarity)
    n_sites, n_cats = counts.shape
    fig, ax = plt.subplots(figsize=(max(8.0, 0.45 * n_cats * max(1, n_sites)), 4.5))
    x = np.arange(n_cats)
    width = 0.8 / max(1, n_sites)
    for i, site in enumerate(table.sites):
        ax.bar(x + i * width, counts[i], width=width, label=site)
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels(table.categories, rotation=60, ha="right", fontsize=8)
    ax.set_ylabel(f"{polarity} mentions")
    ax.set_title(f"Symptom-category mention counts ({polarity})")
    if n_sites <= 12:
        ax.legend(fontsize=7)
    return _save(fig, Path(path))


def render_correlation_heatmap(
    matrix: CorrelationMatrix,
    path: str | Path,
    title: str,
    totals: dict[str, int] | None = None,
) -> Path:
    """Rho heatmap; when per-label totals are given they appear as a side bar."""
    rho = matrix.rho_array()
    size = len(matrix.labels)
    if totals is not None:
        fig, (ax, ax_tot) = plt.subplots(
            1, 2, figsize=(0.5 * size + 6.5, 0.45 * size + 2.5), gridspec_kw={"width_ratios": [4, 1]}
        )
    else:
        fig, ax = plt.subplots(figsize=(0.5 * size + 5, 0.45 * size + 2.5))
        ax_tot = None
    masked = np.ma.masked_invalid(rho)
    image = ax.imshow(masked, vmin=-1.0, vmax=1.0, cmap="RdBu_r")
    ax.set_xticks(range(size))
    ax.set_yticks(range(size))
    ax.set_xticklabels(matrix.labels, rotation=60, ha="right", fontsize=7)
    ax.set_yticklabels(matrix.labels, fontsize=7)
    if size <= 30:
        for i in range(size):
            for j in range(size):
                if not np.isnan(rho[i, j]):
                    ax.text(j, i, f"{rho[i, j]:.2f}", ha="center", va="center", fontsize=5)
    ax.set_title(title)
    fig.colorbar(image, ax=ax, shrink=0.8)
    if ax_tot is not None and totals is not None:
        values = [totals.get(label, 0) for label in matrix.labels]
        ax_tot.barh(range(size), values, color="#555555")
        ax_tot.set_yticks(range(size))
        ax_tot.set_yticklabels([])
        ax_tot.invert_yaxis()
        ax_tot.set_xlabel("total mentions")
    return _save(fig, Path(path))


def render_bootstrap_figure(report: BootstrapReport, path: str | Path) -> Path:
    """Histogram per bootstrapped metric."""
    names = list(report.samples)
    fig, axes = plt.subplots(1, len(names), figsize=(3.2 * len(names), 3.0), sharey=True)
    if len(names) == 1:
        axes = [axes]
    for ax, name in zip(axes, names):
        values = report.samples[name]
        ax.hist(values, bins=20, color="#4878d0", edgecolor="white")
        stat = report.stats[name]
        ax.axvline(stat.mean, color="#d65f5f", linewidth=1.2)
        ax.set_title(f"{name}\nmean={stat.mean:.3f} sd={stat.sd:.3f}", fontsize=8)
        ax.tick_params(labelsize=7)
    fig.suptitle(f"Bootstrap distributions ({report.iterations} iterations, seed {report.seed})", fontsize=10)
    return _save(fig, Path(path))


def render_timing_figure(timing_csv: str | Path, path: str | Path) -> Path:
    """Mean +/- SD runtime per pipeline module, from a run's timing.csv."""
    stages = ["segment_sections", "segment_sentences", "ner", "assertion", "serialization"]
    rows: dict[str, list[float]] = {s: [] for s in stages}
    with open(timing_csv, newline="", encoding="utf-8") as fh:
        for record in csv.DictReader(fh):
            for stage in stages:
                rows[stage].append(float(record[stage]))
    means = [float(np.mean(rows[s])) if rows[s] else 0.0 for s in stages]
    sds = [float(np.std(rows[s])) if rows[s] else 0.0 for s in stages]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    x = np.arange(len(stages))
    ax.bar(x, means, yerr=sds, capsize=4, color="#6acc64")
    for xi, mean in zip(x, means):
        ax.text(xi, mean, f"{mean:.4f}", ha="center", va="bottom", fontsize=7)
    ax.set_xticks(x)
    ax.set_xticklabels(stages, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("seconds per note")
    ax.set_title("Module-wise runtime (mean and SD per note)")
    return _save(fig, Path(path))
