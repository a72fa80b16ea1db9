"""Classification metrics: confusion matrix, macro precision/recall/F1, and
one-vs-rest ROC-AUC with explicit tie handling.

Conventions (documented in every exported report): averages are macro
(unweighted over classes); precision/recall/F1 denominators of zero
contribute 0; AUC uses the rank (Mann-Whitney) statistic with half credit
for ties; classes without both positives and negatives are skipped for AUC
and flagged; argmax ties resolve to the lowest class index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MetricsReport",
    "RocResult",
    "predicted_labels",
    "confusion_matrix",
    "prf_macro",
    "roc_points",
    "roc_auc_ovr",
    "evaluate",
    "report_to_dict",
    "confusion_to_csv",
    "roc_points_to_csv",
]

CONVENTIONS = {
    "average": "macro (unweighted over classes)",
    "zero_denominator": "precision/recall/F1 contribute 0",
    "auc_ties": "half credit (rank statistic)",
    "auc_undefined": "classes without positives and negatives are skipped and flagged",
    "argmax_ties": "lowest class index wins",
}


@dataclass(frozen=True, eq=False)
class RocResult:
    auc_per_class: tuple[float | None, ...]
    macro_auc: float
    skipped_classes: tuple[int, ...]
    points_per_class: tuple[tuple[tuple[float, float], ...] | None, ...]


@dataclass(frozen=True, eq=False)
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    auc_per_class: tuple[float | None, ...]
    macro_auc: float
    auc_skipped_classes: tuple[int, ...]
    confusion: np.ndarray  # rows = true, columns = predicted
    n_samples: int
    roc_points: tuple[tuple[tuple[float, float], ...] | None, ...]


def predicted_labels(prob_rows: np.ndarray) -> np.ndarray:
    """Argmax per row; ties resolve to the lowest class index."""
    return np.argmax(np.asarray(prob_rows), axis=1)


def confusion_matrix(true_labels, predicted, n_classes: int) -> np.ndarray:
    """Count matrix with entry (i, j) = samples of true class i predicted j."""
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError(f"label arrays disagree: {t.shape} vs {p.shape}")
    if t.size and (
        t.min() < 0 or t.max() >= n_classes or p.min() < 0 or p.max() >= n_classes
    ):
        raise ValueError(f"label out of range for {n_classes} classes")
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(matrix, (t, p), 1)
    return matrix


def prf_macro(confusion) -> tuple[float, float, float]:
    """Macro precision, recall, F1; zero-denominator classes contribute 0."""
    c = np.asarray(confusion, dtype=np.float64)
    tp = np.diag(c)
    fp = c.sum(axis=0) - tp
    fn = c.sum(axis=1) - tp
    precision = np.divide(tp, tp + fp, out=np.zeros_like(tp), where=(tp + fp) > 0)
    recall = np.divide(tp, tp + fn, out=np.zeros_like(tp), where=(tp + fn) > 0)
    f1 = np.divide(
        2.0 * precision * recall,
        precision + recall,
        out=np.zeros_like(tp),
        where=(precision + recall) > 0,
    )
    return float(precision.mean()), float(recall.mean()), float(f1.mean())


def roc_points(scores, positive_mask) -> tuple[tuple[float, float], ...]:
    """(FPR, TPR) at every distinct score threshold, descending, from (0, 0)."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive_mask, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one positive and one negative")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = positive[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    idx = 0
    n = scores.size
    while idx < n:
        j = idx
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[idx]:
            j += 1
        block_pos = int(sorted_pos[idx : j + 1].sum())
        tp += block_pos
        fp += (j - idx + 1) - block_pos
        points.append((fp / n_neg, tp / n_pos))
        idx = j + 1
    return tuple(points)


def _auc_rank(scores: np.ndarray, positive: np.ndarray) -> float:
    # Mann-Whitney statistic via average ranks; ties get half credit
    n = scores.size
    n_pos = int(positive.sum())
    n_neg = n - n_pos
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(n, dtype=np.float64)
    idx = 0
    while idx < n:
        j = idx
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[idx]:
            j += 1
        ranks[order[idx : j + 1]] = (idx + j) / 2.0 + 1.0
        idx = j + 1
    u = float(ranks[positive].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def roc_auc_ovr(true_labels, score_rows) -> RocResult:
    """Per-class one-vs-rest AUC from the per-class score columns.

    Classes without at least one positive and one negative sample are
    skipped (AUC ``None``) and listed in ``skipped_classes``; the macro AUC
    averages the remaining classes.
    """
    scores = np.asarray(score_rows, dtype=np.float64)
    t = np.asarray(true_labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != t.shape[0]:
        raise ValueError(f"score matrix {scores.shape} does not match {t.shape[0]} labels")
    n_classes = scores.shape[1]
    aucs: list[float | None] = []
    skipped: list[int] = []
    pts: list[tuple[tuple[float, float], ...] | None] = []
    for c in range(n_classes):
        mask = t == c
        n_pos = int(mask.sum())
        if n_pos == 0 or n_pos == t.size:
            skipped.append(c)
            aucs.append(None)
            pts.append(None)
            continue
        aucs.append(_auc_rank(scores[:, c], mask))
        pts.append(roc_points(scores[:, c], mask))
    valid = [a for a in aucs if a is not None]
    macro = float(np.mean(valid)) if valid else float("nan")
    return RocResult(
        auc_per_class=tuple(aucs),
        macro_auc=macro,
        skipped_classes=tuple(skipped),
        points_per_class=tuple(pts),
    )


def evaluate(true_labels, prob_rows, n_classes: int) -> MetricsReport:
    """Full report from probability rows and true labels."""
    t = np.asarray(true_labels, dtype=np.int64)
    preds = predicted_labels(prob_rows)
    conf = confusion_matrix(t, preds, n_classes)
    precision, recall, f1 = prf_macro(conf)
    roc = roc_auc_ovr(t, prob_rows)
    n = int(t.size)
    return MetricsReport(
        accuracy=float(np.trace(conf)) / n,
        macro_precision=precision,
        macro_recall=recall,
        macro_f1=f1,
        auc_per_class=roc.auc_per_class,
        macro_auc=roc.macro_auc,
        auc_skipped_classes=roc.skipped_classes,
        confusion=conf,
        n_samples=n,
        roc_points=roc.points_per_class,
    )


def report_to_dict(
    report: MetricsReport,
    class_names: tuple[str, ...] | None = None,
    config: dict | None = None,
) -> dict:
    """JSON-ready view of a report, including the metric conventions."""
    out = {
        "accuracy": report.accuracy,
        "macro_precision": report.macro_precision,
        "macro_recall": report.macro_recall,
        "macro_f1": report.macro_f1,
        "auc_per_class": list(report.auc_per_class),
        "macro_auc": report.macro_auc,
        "auc_skipped_classes": list(report.auc_skipped_classes),
        "confusion": report.confusion.tolist(),
        "n_samples": report.n_samples,
        "roc_points": [
            None if pts is None else [[fpr, tpr] for fpr, tpr in pts]
            for pts in report.roc_points
        ],
        "conventions": dict(CONVENTIONS),
    }
    if class_names is not None:
        out["class_names"] = list(class_names)
    if config is not None:
        out["config"] = config
    return out


def confusion_to_csv(confusion: np.ndarray, class_names: tuple[str, ...]) -> str:
    """Confusion matrix as CSV; rows are true classes, columns predictions."""
    header = "true\\predicted," + ",".join(class_names)
    lines = [header]
    for name, row in zip(class_names, np.asarray(confusion)):
        lines.append(name + "," + ",".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


def roc_points_to_csv(points: tuple[tuple[float, float], ...]) -> str:
    lines = ["fpr,tpr"]
    for fpr, tpr in points:
        lines.append(f"{fpr!r},{tpr!r}")
    return "\n".join(lines) + "\n"
