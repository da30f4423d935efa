"""Confusion statistics, ROC curves, and AUC with an explicit positive class.

Every confusion count is one-vs-rest against a designated positive
class, and every derived rate returns None (not 0) when its denominator
is zero, so "no positives existed" is distinguishable from "all missed".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int
    positive: object = None  # the class designation counts are relative to

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(predicted, truth, positive) -> Confusion:
    """One-vs-rest counts; `positive` is compared by equality to each label."""
    predicted, truth = list(predicted), list(truth)
    if len(predicted) != len(truth):
        raise ValueError(
            f"{len(predicted)} predictions vs {len(truth)} truth labels"
        )
    tp = fp = tn = fn = 0
    for p, t in zip(predicted, truth):
        if t == positive:
            if p == positive:
                tp += 1
            else:
                fn += 1
        else:
            if p == positive:
                fp += 1
            else:
                tn += 1
    return Confusion(tp, fp, tn, fn, positive=positive)


def _ratio(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


def sensitivity(c: Confusion) -> float | None:
    return _ratio(c.tp, c.tp + c.fn)


def specificity(c: Confusion) -> float | None:
    return _ratio(c.tn, c.tn + c.fp)


def accuracy(c: Confusion) -> float | None:
    return _ratio(c.tp + c.tn, c.total)


def f1(c: Confusion) -> float | None:
    return _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn)


@dataclass(frozen=True)
class RocCurve:
    """Threshold-ordered (fpr, tpr) points from (0,0) to (1,1)."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(a), float(b)) for a, b in self.points)
        if pts[0] != (0.0, 0.0) or pts[-1] != (1.0, 1.0):
            raise ValueError("ROC curve must start at (0,0) and end at (1,1)")
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            if x1 < x0 or y1 < y0:
                raise ValueError("ROC coordinates must be non-decreasing")
        object.__setattr__(self, "points", pts)


def roc_curve(scores, truth, positive) -> RocCurve:
    """Sweep the decision threshold over all distinct scores.

    Higher score must mean "more positive". Tied scores enter the curve
    as a single point, which makes the trapezoidal area counts ties as
    half-concordant.
    """
    scores = np.asarray(scores, dtype=float)
    is_pos = np.array([t == positive for t in truth])
    if len(scores) != len(is_pos):
        raise ValueError(f"{len(scores)} scores vs {len(is_pos)} truth labels")
    n_pos, n_neg = int(is_pos.sum()), int((~is_pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError(
            f"ROC needs both classes present, got {n_pos} positive / {n_neg} negative"
        )
    order = np.argsort(-scores, kind="stable")
    sorted_scores, sorted_pos = scores[order], is_pos[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    for i in range(len(sorted_scores)):
        tp += int(sorted_pos[i])
        fp += int(not sorted_pos[i])
        last_of_tie = i + 1 == len(sorted_scores) or sorted_scores[i + 1] != sorted_scores[i]
        if last_of_tie:
            points.append((fp / n_neg, tp / n_pos))
    return RocCurve(tuple(points))


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve."""
    area = 0.0
    for (x0, y0), (x1, y1) in zip(curve.points, curve.points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def auc_from_scores(scores, truth, positive) -> float:
    return auc(roc_curve(scores, truth, positive))


def margin_scores(scores: np.ndarray, class_index: int) -> np.ndarray:
    """One-vs-rest score for one class: its column minus the best other column."""
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    if not 0 <= class_index < scores.shape[1]:
        raise ValueError(f"class_index {class_index} out of range for C={scores.shape[1]}")
    others = np.delete(scores, class_index, axis=1)
    return scores[:, class_index] - others.max(axis=1)


@dataclass(frozen=True)
class ClassMetrics:
    class_index: int
    counts: Confusion
    sensitivity: float | None
    specificity: float | None
    accuracy: float | None
    f1: float | None


@dataclass(frozen=True)
class MulticlassReport:
    per_class: tuple[ClassMetrics, ...]
    macro_sensitivity: float | None
    macro_specificity: float | None
    macro_accuracy: float | None
    macro_f1: float | None


def _macro(values) -> float | None:
    defined = [v for v in values if v is not None]
    return None if not defined else float(np.mean(defined))


def per_class_report(predicted, truth, C: int) -> MulticlassReport:
    """One-vs-rest metrics per class index plus macro averages over defined values."""
    predicted, truth = list(predicted), list(truth)
    per = []
    for c in range(C):
        counts = confusion(predicted, truth, positive=c)
        per.append(
            ClassMetrics(
                class_index=c,
                counts=counts,
                sensitivity=sensitivity(counts),
                specificity=specificity(counts),
                accuracy=accuracy(counts),
                f1=f1(counts),
            )
        )
    return MulticlassReport(
        per_class=tuple(per),
        macro_sensitivity=_macro(m.sensitivity for m in per),
        macro_specificity=_macro(m.specificity for m in per),
        macro_accuracy=_macro(m.accuracy for m in per),
        macro_f1=_macro(m.f1 for m in per),
    )


def roc_to_csv(curve: RocCurve) -> str:
    """Two-column CSV (fpr, tpr), one point per line."""
    lines = ["fpr,tpr"]
    for x, y in curve.points:
        lines.append(f"{x!r},{y!r}")
    return "\n".join(lines) + "\n"
