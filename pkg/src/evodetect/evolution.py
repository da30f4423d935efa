"""The self-evolving loop: predict, route flags to a labeler, update.

Each epoch the detector predicts a fresh batch, the predicted anomalies
go to a labeler for verification, and the detector warm-starts a fit on
the verified subset (plus any operator-reported misses queued since the
last epoch). Only verified or operator-reported records ever reach a
fit; the detector never trains on its own unverified predictions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Protocol

import numpy as np

from .detectors import (
    BinaryDetector,
    Detector,
    MulticlassDetector,
    fit_incremental,
    predict_binary_batch,
    predict_multiclass_batch,
)
from .imbalance import SmoteConfig, rebalance_epoch
from .metrics import (
    accuracy,
    auc_from_scores,
    confusion,
    f1,
    per_class_report,
    sensitivity,
    specificity,
)
from .model import (
    DEFAULT_CLASS_NAMES,
    NORMAL_CLASS_INDEX,
    Batch,
    ClassLabel,
    Record,
    encode_binary,
    encode_multiclass,
)

BINARY_CLASS_NAMES = ("normal", "anomaly")


@dataclass(frozen=True)
class LabelVerdict:
    record_id: str
    label: ClassLabel


class Labeler(Protocol):
    def verify(
        self, records: list[Record], suggested: list[ClassLabel]
    ) -> list[LabelVerdict]:
        """Return exactly one verdict per submitted record, matched by id."""
        ...


@dataclass
class OracleLabeler:
    """Replay-mode administrator answering from held-out ground truth.

    With flip_probability > 0 each verdict is replaced, with that
    probability, by a uniformly random other class — a noise knob for
    robustness experiments.
    """

    truth_by_id: dict[str, ClassLabel]
    class_names: tuple[str, ...] = BINARY_CLASS_NAMES
    flip_probability: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.flip_probability <= 1:
            raise ValueError(f"flip_probability must be in [0,1], got {self.flip_probability}")
        self._rng = np.random.default_rng(self.seed)

    def verify(self, records, suggested):
        out = []
        for r in records:
            if r.id not in self.truth_by_id:
                raise KeyError(f"oracle has no truth for record {r.id!r}")
            label = self.truth_by_id[r.id]
            if self.flip_probability > 0 and self._rng.random() < self.flip_probability:
                others = [i for i in range(len(self.class_names)) if i != label.class_index]
                j = int(self._rng.choice(others))
                label = ClassLabel(j, self.class_names[j])
            out.append(LabelVerdict(record_id=r.id, label=label))
        return out


@dataclass(frozen=True)
class EvolutionConfig:
    class_names: tuple[str, ...] = tuple(DEFAULT_CLASS_NAMES)
    smote: SmoteConfig | None = None
    # flag binary records with |score| < margin_tau even when predicted
    # normal; 0 disables the extra flags
    margin_tau: float = 0.0
    # until every anomaly class has bootstrap_min_class_verdicts
    # verdicts, top the flag set up to this fraction of the epoch with
    # the most anomaly-leaning records, so a cold or collapsed detector
    # still gets labels covering all classes; 0 disables the top-up
    bootstrap_fraction: float = 0.1
    bootstrap_min_class_verdicts: int = 5

    def __post_init__(self):
        if self.margin_tau < 0:
            raise ValueError(f"margin_tau must be >= 0, got {self.margin_tau}")
        if not 0 <= self.bootstrap_fraction <= 1:
            raise ValueError(
                f"bootstrap_fraction must be in [0,1], got {self.bootstrap_fraction}"
            )
        if self.bootstrap_min_class_verdicts < 1:
            raise ValueError(
                "bootstrap_min_class_verdicts must be >= 1, "
                f"got {self.bootstrap_min_class_verdicts}"
            )


@dataclass(frozen=True)
class EvolutionState:
    """Everything the loop carries across epochs besides the config."""

    detector: Detector
    records_seen: int = 0
    verdicts_seen: int = 0
    epochs_run: int = 0
    predicted_normal_ids: frozenset[str] = frozenset()
    missed_reported_ids: frozenset[str] = frozenset()
    pending_missed: tuple[tuple[Record, ClassLabel], ...] = ()
    # verdicts received so far, by class index; () means none yet
    verdict_class_counts: tuple[int, ...] = ()


@dataclass(frozen=True)
class EpochReport:
    epoch_index: int
    n: int
    flagged: int
    missed: int
    verdict_counts: dict[str, int]
    labeled_fraction_cumulative: float
    metrics: dict
    partial: bool
    auc: float | None = None
    warnings: tuple[str, ...] = ()
    error: str | None = None

    def __post_init__(self):
        if not 0 <= self.flagged <= self.n:
            raise ValueError(f"flagged {self.flagged} outside [0, n={self.n}]")
        if not 0 <= self.labeled_fraction_cumulative <= 1:
            raise ValueError("labeled_fraction_cumulative must be in [0,1]")


@dataclass(frozen=True)
class FlagResult:
    """Predictions for one batch plus the flagged (predicted-anomaly) subset."""

    pred_indices: np.ndarray  # per record: 0 = normal; >0 = anomaly class
    scores: np.ndarray  # binary: (n,); multiclass: (n, C)
    flagged_indices: tuple[int, ...]
    suggested: tuple[ClassLabel, ...]


def _score_vector(detector: Detector, scores: np.ndarray) -> np.ndarray:
    """Collapse raw decision scores to one anomaly-leaning scalar per record."""
    if isinstance(detector, BinaryDetector):
        return -scores
    return scores[:, 1:].max(axis=1) - scores[:, NORMAL_CLASS_INDEX]


def _class_count(detector: Detector) -> int:
    return 2 if isinstance(detector, BinaryDetector) else detector.C


def needs_bootstrap(state: EvolutionState, cfg: EvolutionConfig) -> bool:
    """True while some anomaly class still lacks its minimum verdict count."""
    if cfg.bootstrap_fraction <= 0:
        return False
    C = _class_count(state.detector)
    counts = state.verdict_class_counts or (0,) * C
    return any(counts[j] < cfg.bootstrap_min_class_verdicts for j in range(1, C))


def flag_predictions(
    detector: Detector,
    batch: Batch,
    cfg: EvolutionConfig,
    explore_quota: int = 0,
) -> FlagResult:
    """Predict every record and collect the subset routed to the labeler.

    With explore_quota > 0 the flag set is padded to at least that many
    records, taking the unflagged ones with the largest anomaly-leaning
    margin first. Padded records keep their normal prediction; only the
    routing changes, with the nearest anomaly class as the suggestion.
    """
    if batch.d != detector.d:
        raise ValueError(f"batch has {batch.d} attributes, detector expects {detector.d}")
    batch.require_normalized()
    X = batch.values_matrix()
    if isinstance(detector, BinaryDetector):
        labels_pm, scores = predict_binary_batch(X, detector)
        pred_indices = np.where(labels_pm == -1, 1, 0)
        flagged = pred_indices == 1
        if cfg.margin_tau > 0:
            flagged = flagged | (np.abs(scores) < cfg.margin_tau)
    else:
        pred_indices, scores = predict_multiclass_batch(X, detector)
        flagged = pred_indices != NORMAL_CLASS_INDEX
    predicted = flagged.copy()
    quota = min(explore_quota, len(batch))
    if quota > int(flagged.sum()):
        order = np.argsort(-_score_vector(detector, scores), kind="stable")
        for i in order:
            if int(flagged.sum()) >= quota:
                break
            flagged[i] = True

    def suggest(i: int) -> ClassLabel:
        if isinstance(detector, BinaryDetector):
            names = cfg.class_names if len(cfg.class_names) == 2 else BINARY_CLASS_NAMES
            j = int(pred_indices[i]) if predicted[i] else 1
            return ClassLabel(j, names[j])
        if predicted[i]:
            j = int(pred_indices[i])
        else:  # padded: nearest anomaly class by score
            j = 1 + int(np.argmax(scores[i, 1:]))
        return ClassLabel(j, detector.name_of(j))

    picked = np.nonzero(flagged)[0]
    return FlagResult(
        pred_indices=pred_indices,
        scores=scores,
        flagged_indices=tuple(int(i) for i in picked),
        suggested=tuple(suggest(int(i)) for i in picked),
    )


def fit_verified(
    detector: Detector,
    records: list[Record],
    labels: list[ClassLabel],
    smote: SmoteConfig | None,
    epoch_index: int,
) -> tuple[Detector, tuple[str, ...]]:
    """Optionally rebalance the verified subset, then warm-start a fit."""
    if not records:
        return detector, ()
    update = Batch(records=tuple(records), labels=tuple(labels))
    warnings: tuple[str, ...] = ()
    if smote is not None:
        result = rebalance_epoch(update, smote, epoch_index=epoch_index)
        update, warnings = result.batch, result.warnings
    X = update.values_matrix()
    if isinstance(detector, BinaryDetector):
        Y = encode_binary(update.labels)
    else:
        Y = encode_multiclass(update.labels, detector.C)
    return fit_incremental(detector, X, Y), warnings


def anomaly_scores(detector: Detector, flags: FlagResult) -> np.ndarray:
    """Per-record scalar where larger means more anomalous.

    Binary: the negated decision score. Multi-class: best anomaly-column
    score minus the normal-column score.
    """
    return _score_vector(detector, flags.scores)


def _binary_metrics(pred_anomaly, true_anomaly) -> dict:
    c = confusion(pred_anomaly, true_anomaly, positive=True)
    return {
        "positive": "anomaly",
        "tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn,
        "sensitivity": sensitivity(c),
        "specificity": specificity(c),
        "accuracy": accuracy(c),
        "f1": f1(c),
    }


def _multiclass_metrics(pred_idx, true_idx, C: int, name_of) -> dict:
    report = per_class_report(list(pred_idx), list(true_idx), C)
    return {
        "macro_sensitivity": report.macro_sensitivity,
        "macro_specificity": report.macro_specificity,
        "macro_accuracy": report.macro_accuracy,
        "macro_f1": report.macro_f1,
        "per_class": [
            {
                "class_index": m.class_index,
                "class_name": name_of(m.class_index),
                "tp": m.counts.tp, "fp": m.counts.fp,
                "tn": m.counts.tn, "fn": m.counts.fn,
                "sensitivity": m.sensitivity,
                "specificity": m.specificity,
                "accuracy": m.accuracy,
                "f1": m.f1,
            }
            for m in report.per_class
        ],
    }


def epoch_metrics(detector, flags, batch, truth, verdicts_by_id):
    """Metrics dict, AUC, and the partial flag for one epoch's report."""
    if truth is not None:
        true_anomaly = [not t.is_normal for t in truth]
        score = anomaly_scores(detector, flags)
        try:
            auc_val = auc_from_scores(score, true_anomaly, positive=True)
        except ValueError:  # single-class truth: AUC undefined this epoch
            auc_val = None
        if isinstance(detector, BinaryDetector):
            pred_anomaly = [bool(i) for i in flags.pred_indices]
            return _binary_metrics(pred_anomaly, true_anomaly), auc_val, False
        name_of = detector.name_of
        true_idx = [t.class_index for t in truth]
        return (
            _multiclass_metrics(flags.pred_indices, true_idx, detector.C, name_of),
            auc_val,
            False,
        )
    # live mode: only labeler-verified records can be scored
    if not verdicts_by_id:
        return {}, None, True
    pred, true = [], []
    for i, rec_idx in enumerate(flags.flagged_indices):
        rid = batch.records[rec_idx].id
        if rid in verdicts_by_id:
            pred.append(flags.suggested[i].class_index)
            true.append(verdicts_by_id[rid].class_index)
    if isinstance(detector, BinaryDetector):
        return _binary_metrics([bool(p) for p in pred], [bool(t) for t in true]), None, True
    return _multiclass_metrics(pred, true, detector.C, detector.name_of), None, True


def run_epoch(
    state: EvolutionState,
    batch: Batch,
    labeler: Labeler,
    cfg: EvolutionConfig,
    truth: tuple[ClassLabel, ...] | None = None,
) -> tuple[EvolutionState, EpochReport]:
    """One turn of the loop; returns the advanced state and its report.

    `truth` (labels for every record, in batch order) is only available
    in replay mode and only feeds the report's metrics — the detector
    sees nothing but labeler verdicts and queued missed-reports.
    """
    if truth is not None and len(truth) != len(batch):
        raise ValueError(f"{len(truth)} truth labels for {len(batch)} records")
    quota = 0
    if needs_bootstrap(state, cfg):
        quota = math.ceil(cfg.bootstrap_fraction * len(batch))
    flags = flag_predictions(state.detector, batch, cfg, explore_quota=quota)
    flagged_records = [batch.records[i] for i in flags.flagged_indices]

    epoch_index = state.epochs_run
    records_seen = state.records_seen + len(batch)
    normal_ids = state.predicted_normal_ids | {
        batch.records[i].id
        for i in range(len(batch))
        if flags.pred_indices[i] == NORMAL_CLASS_INDEX and i not in flags.flagged_indices
    }

    def report_with(**kw) -> EpochReport:
        base = dict(
            epoch_index=epoch_index,
            n=len(batch),
            flagged=len(flagged_records),
            missed=0,
            verdict_counts={},
            labeled_fraction_cumulative=(
                state.verdicts_seen / records_seen if records_seen else 0.0
            ),
            metrics={},
            partial=truth is None,
        )
        base.update(kw)
        return EpochReport(**base)

    verdicts: list[LabelVerdict] = []
    if flagged_records:
        raw = list(labeler.verify(list(flagged_records), list(flags.suggested)))
        by_id = {v.record_id: v for v in raw}
        expected = {r.id for r in flagged_records}
        if len(raw) != len(flagged_records) or set(by_id) != expected:
            # abort: detector unchanged, error recorded, nothing consumed
            report = report_with(
                error=(
                    f"labeler returned {len(raw)} verdict(s) for "
                    f"{len(flagged_records)} flagged record(s)"
                ),
            )
            next_state = replace(
                state,
                records_seen=records_seen,
                epochs_run=epoch_index + 1,
                predicted_normal_ids=normal_ids,
            )
            return next_state, report
        verdicts = [by_id[r.id] for r in flagged_records]

    update_records = list(flagged_records)
    update_labels = [v.label for v in verdicts]
    missed_pairs = state.pending_missed
    for rec, lbl in missed_pairs:
        update_records.append(rec)
        update_labels.append(lbl)

    detector, warnings = fit_verified(
        state.detector, update_records, update_labels, cfg.smote, epoch_index
    )

    verdicts_seen = state.verdicts_seen + len(verdicts) + len(missed_pairs)
    verdict_counts: dict[str, int] = {}
    class_counts = list(state.verdict_class_counts or (0,) * _class_count(state.detector))
    for lbl in update_labels:
        verdict_counts[lbl.class_name] = verdict_counts.get(lbl.class_name, 0) + 1
        class_counts[lbl.class_index] += 1

    verdicts_by_id = {v.record_id: v.label for v in verdicts}
    metrics, auc_val, partial = epoch_metrics(
        state.detector, flags, batch, truth, verdicts_by_id
    )

    report = report_with(
        missed=len(missed_pairs),
        verdict_counts=verdict_counts,
        labeled_fraction_cumulative=verdicts_seen / records_seen,
        metrics=metrics,
        partial=partial,
        auc=auc_val,
        warnings=warnings,
    )
    next_state = EvolutionState(
        detector=detector,
        records_seen=records_seen,
        verdicts_seen=verdicts_seen,
        epochs_run=epoch_index + 1,
        predicted_normal_ids=normal_ids,
        missed_reported_ids=state.missed_reported_ids,
        pending_missed=(),
        verdict_class_counts=tuple(class_counts),
    )
    return next_state, report


def report_missed(state: EvolutionState, record: Record, truth: ClassLabel) -> EvolutionState:
    """Queue an operator correction for the next epoch's update set."""
    if truth.is_normal:
        raise ValueError("only failures are reportable; class is normal")
    if record.id not in state.predicted_normal_ids:
        raise ValueError(f"record {record.id!r} was never predicted normal")
    if record.id in state.missed_reported_ids:
        raise ValueError(f"record {record.id!r} already reported")
    return replace(
        state,
        missed_reported_ids=state.missed_reported_ids | {record.id},
        pending_missed=state.pending_missed + ((record, truth),),
    )


def labeled_fraction(reports: list[EpochReport], window: int) -> float:
    """Mean of (flagged + missed) / n over the last `window` epochs."""
    if not reports:
        raise ValueError("labeled_fraction needs at least one report")
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    tail = reports[-window:]
    return float(np.mean([(r.flagged + r.missed) / r.n for r in tail]))


def report_to_dict(report: EpochReport) -> dict:
    return {
        "epoch_index": report.epoch_index,
        "n": report.n,
        "flagged": report.flagged,
        "missed": report.missed,
        "verdict_counts": dict(report.verdict_counts),
        "labeled_fraction_cumulative": report.labeled_fraction_cumulative,
        "metrics": report.metrics,
        "partial": report.partial,
        "auc": report.auc,
        "warnings": list(report.warnings),
        "error": report.error,
    }


def report_from_dict(d: dict) -> EpochReport:
    return EpochReport(
        epoch_index=int(d["epoch_index"]),
        n=int(d["n"]),
        flagged=int(d["flagged"]),
        missed=int(d["missed"]),
        verdict_counts=dict(d["verdict_counts"]),
        labeled_fraction_cumulative=float(d["labeled_fraction_cumulative"]),
        metrics=dict(d["metrics"]),
        partial=bool(d["partial"]),
        auc=None if d.get("auc") is None else float(d["auc"]),
        warnings=tuple(d.get("warnings", ())),
        error=d.get("error"),
    )


def append_report(path, report: EpochReport) -> None:
    """Append one JSON-lines record to the epoch-report log."""
    with Path(path).open("a") as fh:
        fh.write(json.dumps(report_to_dict(report), sort_keys=True) + "\n")


def read_reports(path) -> list[EpochReport]:
    out = []
    with Path(path).open() as fh:
        for line in fh:
            if line.strip():
                out.append(report_from_dict(json.loads(line)))
    return out
