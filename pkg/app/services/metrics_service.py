"""Confusion counts and accuracy / precision / recall / F1."""
from __future__ import annotations

import numpy as np

from app.core.config import DECISION_THRESHOLD, NEGATIVE_LABEL, POSITIVE_LABEL
from app.core.errors import EmptySplitError
from app.schemas.metrics import ClassMetrics, ConfusionCounts, MetricsReport


def _ratio(numerator: int, denominator: int) -> tuple[float, bool]:
    """(value, undefined); an empty denominator reports 0 and raises the flag."""
    if denominator == 0:
        return 0.0, True
    return numerator / denominator, False


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def class_metrics(counts: ConfusionCounts) -> ClassMetrics:
    """Metrics of the class treated as positive in ``counts``."""
    precision, precision_undefined = _ratio(counts.tp, counts.tp + counts.fp)
    recall, recall_undefined = _ratio(counts.tp, counts.tp + counts.fn)
    return ClassMetrics(
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        support=counts.tp + counts.fn,
        precision_undefined=precision_undefined,
        recall_undefined=recall_undefined,
        f1_undefined=precision + recall == 0,
    )


def compute_metrics(counts: ConfusionCounts) -> MetricsReport:
    total = counts.total
    if total == 0:
        raise EmptySplitError("cannot compute metrics over zero samples")
    positive = class_metrics(counts)
    negative = class_metrics(counts.swapped())
    per_class = {POSITIVE_LABEL: positive, NEGATIVE_LABEL: negative}
    weights = np.array([positive.support, negative.support], dtype=np.float64) / total

    def macro(attr: str) -> float:
        return (getattr(positive, attr) + getattr(negative, attr)) / 2

    def weighted(attr: str) -> float:
        return float(weights @ np.array([getattr(positive, attr), getattr(negative, attr)]))

    return MetricsReport(
        counts=counts,
        accuracy=(counts.tp + counts.tn) / total,
        precision=positive.precision,
        recall=positive.recall,
        f1=positive.f1,
        precision_undefined=positive.precision_undefined,
        recall_undefined=positive.recall_undefined,
        f1_undefined=positive.f1_undefined,
        per_class=per_class,
        macro_precision=macro("precision"),
        macro_recall=macro("recall"),
        macro_f1=macro("f1"),
        weighted_precision=weighted("precision"),
        weighted_recall=weighted("recall"),
        weighted_f1=weighted("f1"),
    )


def confusion_counts(labels, predictions) -> ConfusionCounts:
    """Count outcomes with COVID (1) as the positive class."""
    labels = np.asarray(labels).astype(bool)
    predictions = np.asarray(predictions).astype(bool)
    if labels.shape != predictions.shape:
        raise ValueError(f"labels {labels.shape} and predictions {predictions.shape} differ in shape")
    return ConfusionCounts(
        tp=int(np.sum(labels & predictions)),
        fp=int(np.sum(~labels & predictions)),
        fn=int(np.sum(labels & ~predictions)),
        tn=int(np.sum(~labels & ~predictions)),
    )


def threshold(probabilities, cutoff: float = DECISION_THRESHOLD) -> np.ndarray:
    return np.asarray(probabilities) >= cutoff


def metrics_from_probabilities(labels, probabilities) -> MetricsReport:
    if len(labels) == 0:
        raise EmptySplitError("cannot evaluate an empty split")
    return compute_metrics(confusion_counts(labels, threshold(probabilities)))


def format_report(report: MetricsReport) -> str:
    """``key: value`` lines for terminals and diffs."""
    c = report.counts
    lines = [
        f"samples: {c.total}",
        f"tp: {c.tp}",
        f"fp: {c.fp}",
        f"fn: {c.fn}",
        f"tn: {c.tn}",
        f"accuracy: {report.accuracy:.4f}",
        f"precision: {report.precision:.4f}" + (" (undefined)" if report.precision_undefined else ""),
        f"recall: {report.recall:.4f}" + (" (undefined)" if report.recall_undefined else ""),
        f"f1: {report.f1:.4f}" + (" (undefined)" if report.f1_undefined else ""),
    ]
    for label, metrics in report.per_class.items():
        lines.append(
            f"{label}: precision {metrics.precision:.4f} recall {metrics.recall:.4f} "
            f"f1 {metrics.f1:.4f} support {metrics.support}"
        )
    lines.extend([
        f"macro_precision: {report.macro_precision:.4f}",
        f"macro_recall: {report.macro_recall:.4f}",
        f"macro_f1: {report.macro_f1:.4f}",
        f"weighted_precision: {report.weighted_precision:.4f}",
        f"weighted_recall: {report.weighted_recall:.4f}",
        f"weighted_f1: {report.weighted_f1:.4f}",
    ])
    return "\n".join(lines) + "\n"
