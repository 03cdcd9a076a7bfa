"""Evaluation statistics: binary assertion metrics, note-level bootstrap,
Cohen's kappa, and pooled-reference recall.

Conventions: precision, recall, and F1 of the positive class are defined as
0 when their denominators vanish. Balanced accuracy averages per-class
recalls, where a class absent from the gold labels contributes a vacuous
recall of 1 (it has nothing to miss); that keeps the all-correct case at 1.0
and scores a degenerate all-positive prediction against all-negative gold
at 0.5.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .assertion import BinaryAssertion


class EvalError(ValueError):
    pass


class EmptyInput(EvalError):
    pass


class LengthMismatch(EvalError):
    pass


class EmptyReference(EvalError):
    pass


class SubsetViolation(EvalError):
    pass


@dataclass(frozen=True)
class LabeledPair:
    note_id: str
    start: int
    end: int
    predicted: BinaryAssertion
    gold: BinaryAssertion

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.note_id, self.start, self.end)


@dataclass(frozen=True)
class MetricReport:
    precision: float
    recall: float
    f1: float
    weighted_f1: float
    balanced_accuracy: float
    tp: int
    fp: int
    fn: int
    tn: int

    def as_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "weighted_f1": self.weighted_f1,
            "balanced_accuracy": self.balanced_accuracy,
            "support": {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn},
        }


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if (p + r) > 0 else 0.0


def score(pairs: Sequence[LabeledPair]) -> MetricReport:
    """Positive-class precision/recall/F1 plus weighted F1 and balanced accuracy."""
    if not pairs:
        raise EmptyInput("cannot score an empty pair set")
    tp = fp = fn = tn = 0
    for pair in pairs:
        pred_pos = pair.predicted is BinaryAssertion.POSITIVE
        gold_pos = pair.gold is BinaryAssertion.POSITIVE
        if pred_pos and gold_pos:
            tp += 1
        elif pred_pos:
            fp += 1
        elif gold_pos:
            fn += 1
        else:
            tn += 1
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    f1 = _f1(precision, recall)

    precision_neg = _safe_div(tn, tn + fn)
    recall_neg = _safe_div(tn, tn + fp)
    f1_neg = _f1(precision_neg, recall_neg)
    support_pos = tp + fn
    support_neg = tn + fp
    weighted_f1 = (support_pos * f1 + support_neg * f1_neg) / (support_pos + support_neg)

    recall_pos_ba = tp / (tp + fn) if (tp + fn) > 0 else 1.0
    recall_neg_ba = tn / (tn + fp) if (tn + fp) > 0 else 1.0
    balanced_accuracy = (recall_pos_ba + recall_neg_ba) / 2

    return MetricReport(precision, recall, f1, weighted_f1, balanced_accuracy, tp, fp, fn, tn)


METRIC_NAMES = ("precision", "recall", "f1", "weighted_f1", "balanced_accuracy")


@dataclass(frozen=True)
class BootstrapStat:
    mean: float
    sd: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class BootstrapReport:
    iterations: int
    seed: int
    stats: dict[str, BootstrapStat]
    samples: dict[str, list[float]]

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "seed": self.seed,
            "metrics": {
                name: {
                    "mean": s.mean,
                    "sd": s.sd,
                    "ci95_low": s.ci_low,
                    "ci95_high": s.ci_high,
                }
                for name, s in self.stats.items()
            },
            "samples": self.samples,
        }


def bootstrap(pairs: Sequence[LabeledPair], iterations: int = 100, seed: int = 0) -> BootstrapReport:
    """Resample notes with replacement, score each replicate, and summarize.

    The resampling unit is the note, not the mention, so between-note
    variance is preserved. Each iteration derives its RNG from
    (seed + iteration index), making the report fully deterministic.
    """
    if not pairs:
        raise EmptyInput("cannot bootstrap an empty pair set")
    if iterations < 1:
        raise EvalError("iterations must be >= 1")
    by_note: dict[str, list[LabeledPair]] = {}
    for pair in pairs:
        by_note.setdefault(pair.note_id, []).append(pair)
    note_ids = sorted(by_note)
    samples: dict[str, list[float]] = {name: [] for name in METRIC_NAMES}
    for i in range(iterations):
        rng = np.random.default_rng(seed + i)
        picks = rng.integers(0, len(note_ids), size=len(note_ids))
        resampled: list[LabeledPair] = []
        for idx in picks:
            resampled.extend(by_note[note_ids[idx]])
        report = score(resampled)
        values = report.as_dict()
        for name in METRIC_NAMES:
            samples[name].append(values[name])
    stats = {}
    for name in METRIC_NAMES:
        arr = np.asarray(samples[name], dtype=float)
        stats[name] = BootstrapStat(
            mean=float(arr.mean()),
            sd=float(arr.std(ddof=0)),
            ci_low=float(np.percentile(arr, 2.5)),
            ci_high=float(np.percentile(arr, 97.5)),
        )
    return BootstrapReport(iterations=iterations, seed=seed, stats=stats, samples=samples)


def cohens_kappa(a: Sequence[Hashable], b: Sequence[Hashable]) -> float:
    """Chance-corrected agreement between two label vectors."""
    if len(a) != len(b):
        raise LengthMismatch(f"label vectors differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise EmptyInput("cannot compute kappa on empty vectors")
    n = len(a)
    observed = sum(1 for x, y in zip(a, b) if x == y) / n
    labels = set(a) | set(b)
    expected = 0.0
    for label in labels:
        pa = sum(1 for x in a if x == label) / n
        pb = sum(1 for y in b if y == label) / n
        expected += pa * pb
    if expected == 1.0:
        return 1.0 if observed == 1.0 else 0.0
    return (observed - expected) / (1.0 - expected)


def pooled_recall(system_correct: set, reference_union: set) -> float:
    """Recall against a pooled reference: |system| / |union|.

    Used when exhaustive gold annotation is unavailable and the reference is
    the union of verified-correct mentions from multiple systems.
    """
    if not reference_union:
        raise EmptyReference("reference union is empty")
    if not system_correct <= reference_union:
        extra = sorted(system_correct - reference_union)[:3]
        raise SubsetViolation(f"system mentions outside the reference union, e.g. {extra}")
    return len(system_correct) / len(reference_union)
