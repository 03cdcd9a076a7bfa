"""Population-level prevalence analysis: per-site per-category mention counts
and Spearman rank correlations between sites and between categories.

The correlation coefficient is Pearson on average ranks (ties share mean
rank); untied inputs take the classic sum-of-squared-rank-differences form,
which is exact for the degenerate identity/reversal cases. P-values use the
two-sided t approximation for n >= 10 and a seeded Monte-Carlo permutation
test below that; category-wise matrices use Monte-Carlo regardless because
count vectors at around a dozen sites are tie-heavy, and the choice is
recorded in the output metadata.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy import stats as sp_stats

from .assertion import BinaryAssertion
from .docmodel import PipelineOutput


class StatsError(ValueError):
    pass


class LengthMismatch(StatsError):
    pass


class DegenerateInput(StatsError):
    pass


class InsufficientData(StatsError):
    pass


class UnknownSite(StatsError):
    pass


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    p_value: float
    n: int
    method: str  # "exact-t" | "monte-carlo"
    permutations: int | None = None
    seed: int | None = None


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=float)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _pearson_on_ranks(rx: np.ndarray, ry: np.ndarray) -> float:
    if np.array_equal(rx, ry):
        return 1.0
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    denom = math.sqrt(float((dx * dx).sum()) * float((dy * dy).sum()))
    rho = float((dx * dy).sum()) / denom
    return max(-1.0, min(1.0, rho))


def _rho(x: np.ndarray, y: np.ndarray, rx: np.ndarray, ry: np.ndarray) -> float:
    n = len(x)
    untied = len(np.unique(x)) == n and len(np.unique(y)) == n
    if untied:
        d = rx - ry
        s = float((d * d).sum())
        return 1.0 - 6.0 * s / (n * (n * n - 1))
    return _pearson_on_ranks(rx, ry)


def _t_pvalue(rho: float, n: int) -> float:
    if abs(rho) >= 1.0:
        return 0.0
    t = abs(rho) * math.sqrt((n - 2) / (1.0 - rho * rho))
    return float(2.0 * sp_stats.t.sf(t, df=n - 2))


def spearman(
    x: Iterable[float],
    y: Iterable[float],
    method: str = "auto",
    permutations: int = 10_000,
    seed: int = 0,
) -> CorrelationResult:
    """Spearman rank correlation with a two-sided p-value.

    method: "auto" (t approximation for n >= 10, Monte-Carlo below),
    "exact-t", or "monte-carlo". Constant vectors raise DegenerateInput
    rather than returning NaN.
    """
    xa = np.asarray(list(x), dtype=float)
    ya = np.asarray(list(y), dtype=float)
    if len(xa) != len(ya):
        raise LengthMismatch(f"vectors differ in length: {len(xa)} vs {len(ya)}")
    n = len(xa)
    if n < 3:
        raise InsufficientData(f"need at least 3 observations, got {n}")
    if len(np.unique(xa)) == 1 or len(np.unique(ya)) == 1:
        raise DegenerateInput("constant vector has no rank correlation")
    if method == "auto":
        method = "exact-t" if n >= 10 else "monte-carlo"
    if method not in ("exact-t", "monte-carlo"):
        raise StatsError(f"unknown method {method!r}")

    rx = _average_ranks(xa)
    ry = _average_ranks(ya)
    rho = _rho(xa, ya, rx, ry)

    if method == "exact-t":
        return CorrelationResult(rho=rho, p_value=_t_pvalue(rho, n), n=n, method="exact-t")

    # Canonicalize which rank vector gets permuted so that the estimate is
    # exactly symmetric in (x, y) under a fixed seed.
    ra_list, rb_list = sorted([rx.tolist(), ry.tolist()])
    ra = np.asarray(ra_list)
    rb = np.asarray(rb_list)
    rng = np.random.default_rng(seed)
    hits = 0
    threshold = abs(rho) - 1e-12
    for _ in range(permutations):
        perm = rng.permutation(rb)
        if abs(_pearson_on_ranks(ra, perm)) >= threshold:
            hits += 1
    p = (1 + hits) / (1 + permutations)
    return CorrelationResult(
        rho=rho, p_value=p, n=n, method="monte-carlo", permutations=permutations, seed=seed
    )


# ---------------------------------------------------------------------------
# Prevalence table

@dataclass
class PrevalenceTable:
    sites: list[str]
    categories: list[str]
    positive: np.ndarray  # shape (len(sites), len(categories)), int counts
    negative: np.ndarray

    def counts(self, polarity: str) -> np.ndarray:
        if polarity == "positive":
            return self.positive
        if polarity == "negative":
            return self.negative
        raise StatsError(f"unknown polarity {polarity!r}")


def build_table(
    outputs: Iterable[PipelineOutput],
    site_of: Mapping[str, str] | None = None,
    categories: list[str] | None = None,
) -> PrevalenceTable:
    """Count positive and non-positive mentions per site and category.

    When `site_of` is given it must cover every note (UnknownSite otherwise);
    without it, each output's own site_id is used. Passing `categories`
    fixes the category axis so unseen categories appear as zero rows.
    """
    pos: dict[tuple[str, str], int] = {}
    neg: dict[tuple[str, str], int] = {}
    sites: set[str] = set()
    cats: set[str] = set(categories or [])
    for output in outputs:
        if site_of is not None:
            site = site_of.get(output.note_id)
            if site is None:
                raise UnknownSite(f"note {output.note_id!r} has no site mapping")
        else:
            site = output.site_id
        sites.add(site)
        for mention, result in output.mentions:
            cats.add(mention.category_id)
            key = (site, mention.category_id)
            if result.binary is BinaryAssertion.POSITIVE:
                pos[key] = pos.get(key, 0) + 1
            else:
                neg[key] = neg.get(key, 0) + 1
    site_list = sorted(sites)
    cat_list = categories if categories is not None else sorted(cats)
    positive = np.zeros((len(site_list), len(cat_list)), dtype=int)
    negative = np.zeros_like(positive)
    cat_index = {c: j for j, c in enumerate(cat_list)}
    for i, site in enumerate(site_list):
        for cat, j in cat_index.items():
            positive[i, j] = pos.get((site, cat), 0)
            negative[i, j] = neg.get((site, cat), 0)
    return PrevalenceTable(sites=site_list, categories=cat_list, positive=positive, negative=negative)


# ---------------------------------------------------------------------------
# Pairwise correlation matrices

@dataclass
class CorrelationMatrix:
    labels: list[str]
    cells: dict[tuple[int, int], CorrelationResult] = field(default_factory=dict)
    degenerate: dict[tuple[int, int], str] = field(default_factory=dict)
    method: str = "auto"
    permutations: int | None = None
    seed: int | None = None

    def rho_array(self) -> np.ndarray:
        size = len(self.labels)
        out = np.full((size, size), np.nan)
        for (i, j), cell in self.cells.items():
            out[i, j] = cell.rho
        return out

    def min_offdiagonal_rho(self) -> float | None:
        values = [c.rho for (i, j), c in self.cells.items() if i != j]
        return min(values) if values else None


def _pairwise(vectors: list[np.ndarray], labels: list[str], method: str, permutations: int, seed: int) -> CorrelationMatrix:
    matrix = CorrelationMatrix(labels=labels, method=method, permutations=permutations, seed=seed)
    for i in range(len(vectors)):
        for j in range(i, len(vectors)):
            try:
                cell = spearman(vectors[i], vectors[j], method=method, permutations=permutations, seed=seed)
            except DegenerateInput as exc:
                matrix.degenerate[(i, j)] = str(exc)
                matrix.degenerate[(j, i)] = str(exc)
                continue
            matrix.cells[(i, j)] = cell
            matrix.cells[(j, i)] = cell
    return matrix


def pairwise_site_correlations(
    table: PrevalenceTable,
    polarity: str,
    method: str = "auto",
    permutations: int = 10_000,
    seed: int = 0,
) -> CorrelationMatrix:
    """Site-vs-site (plus each site vs the summed overall vector) rank
    correlations of per-category mention counts.

    A single-site table is allowed: its only informative cell is the site
    against the overall vector (which then equals the site itself).
    """
    if len(table.sites) < 1:
        raise InsufficientData("need at least 1 site")
    if len(table.categories) < 3:
        raise InsufficientData("need at least 3 categories")
    counts = table.counts(polarity)
    vectors = [counts[i].astype(float) for i in range(len(table.sites))]
    vectors.append(counts.sum(axis=0).astype(float))
    labels = list(table.sites) + ["overall"]
    return _pairwise(vectors, labels, method, permutations, seed)


def pairwise_category_correlations(
    table: PrevalenceTable,
    polarity: str,
    method: str = "monte-carlo",
    permutations: int = 10_000,
    seed: int = 0,
) -> tuple[CorrelationMatrix, dict[str, int]]:
    """Category-vs-category rank correlations of across-site count vectors,
    plus each category's total mention count.
    """
    if len(table.categories) < 2:
        raise InsufficientData("need at least 2 categories")
    if len(table.sites) < 3:
        raise InsufficientData("need at least 3 sites")
    counts = table.counts(polarity)
    vectors = [counts[:, j].astype(float) for j in range(len(table.categories))]
    matrix = _pairwise(vectors, list(table.categories), method, permutations, seed)
    totals = {cat: int(counts[:, j].sum()) for j, cat in enumerate(table.categories)}
    return matrix, totals


# ---------------------------------------------------------------------------
# Report files

def write_counts_csv(table: PrevalenceTable, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["site", "category", "positive", "negative"])
        for i, site in enumerate(table.sites):
            for j, cat in enumerate(table.categories):
                writer.writerow([site, cat, int(table.positive[i, j]), int(table.negative[i, j])])


def write_matrix_csv(matrix: CorrelationMatrix, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + matrix.labels)
        for i, label in enumerate(matrix.labels):
            row: list[str] = [label]
            for j in range(len(matrix.labels)):
                cell = matrix.cells.get((i, j))
                row.append("" if cell is None else f"{cell.rho:.6f}")
            writer.writerow(row)


def _matrix_summary(matrix: CorrelationMatrix) -> dict:
    return {
        "labels": matrix.labels,
        "method": matrix.method,
        "permutations": matrix.permutations,
        "seed": matrix.seed,
        "min_offdiagonal_rho": matrix.min_offdiagonal_rho(),
        "cells": [
            {
                "a": matrix.labels[i],
                "b": matrix.labels[j],
                "rho": cell.rho,
                "p_value": cell.p_value,
                "n": cell.n,
                "method": cell.method,
            }
            for (i, j), cell in sorted(matrix.cells.items())
            if i <= j
        ],
        "degenerate_pairs": [
            {"a": matrix.labels[i], "b": matrix.labels[j], "reason": reason}
            for (i, j), reason in sorted(matrix.degenerate.items())
            if i <= j
        ],
    }


def write_summary_json(
    table: PrevalenceTable,
    site_pos: CorrelationMatrix | None,
    site_neg: CorrelationMatrix | None,
    cat_pos: CorrelationMatrix | None,
    totals: dict[str, int] | None,
    path: str | Path,
) -> None:
    """Matrices whose preconditions the table cannot meet are recorded null."""
    payload = {
        "sites": table.sites,
        "categories": table.categories,
        "total_positive_mentions": int(table.positive.sum()),
        "total_negative_mentions": int(table.negative.sum()),
        "category_totals_positive": totals,
        "site_correlations_positive": _matrix_summary(site_pos) if site_pos else None,
        "site_correlations_negative": _matrix_summary(site_neg) if site_neg else None,
        "category_correlations_positive": _matrix_summary(cat_pos) if cat_pos else None,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
