"""Offline experiment runner: replay, ablation grids, and lambda sweeps.

Every run writes a manifest (config + seeds + code version, no
timestamps) plus its outputs under one directory, so a rerun with the
same config is byte-identical file for file.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .data_io import (
    Dataset,
    LabeledEpoch,
    SynthConfig,
    apply_norm,
    epochs_from_dataset,
    fit_norm,
    load_csv,
    synth_attribute_names,
    synth_stream,
)
from .detectors import (
    PENALTY_L1,
    PENALTY_L21,
    BinaryDetector,
    MulticlassDetector,
    calibrate_alpha,
    weights_to_text,
)
from .evolution import (
    BINARY_CLASS_NAMES,
    EvolutionConfig,
    EvolutionState,
    OracleLabeler,
    append_report,
    labeled_fraction,
    run_epoch,
)
from .features import DEFAULT_LAMBDAS, lambda_sweep, rank_detector, ranking_to_csv
from .imbalance import SmoteConfig
from .metrics import roc_curve, roc_to_csv
from .model import DEFAULT_CLASS_NAMES, Batch
from .solver import LrSchedule, StopRule

MODEL_KINDS = ("l1ls", "mcl1ls", "mcl21ls")


@dataclass(frozen=True)
class RunConfig:
    """One experiment: data source, model, and the ablation toggles."""

    model: str = "mcl21ls"
    lam: float = 0.01
    alpha: float = 0.5
    epoch_size: int = 300
    epochs: int = 15
    seed: int = 0
    smote: bool = True
    smote_k: int = 5
    smote_ratio: float = 1.0
    biased_init: bool = True
    self_evolving: bool = True  # False = all-evolving: label every record
    margin_tau: float = 0.0
    bootstrap_fraction: float = 0.2
    oracle_flip_probability: float = 0.0
    tol: float = 1e-6
    max_iters: int = 10000
    input_csv: str | None = None  # None = synthetic stream
    synth: SynthConfig | None = None

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValueError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if self.epoch_size < 1 or self.epochs < 1:
            raise ValueError("epoch_size and epochs must be >= 1")
        if self.input_csv is None and self.synth is None:
            raise ValueError("either input_csv or synth settings are required")


def default_synth_config(
    seed: int = 0,
    d: int = 20,
    shift: float = 0.45,
    noise: float = 0.07,
    rate: float = 0.2,
    mix: tuple[float, ...] = (0.25, 0.25, 0.25, 0.25),
) -> SynthConfig:
    """Desk-scale stand-in for a four-fault-type telemetry stream.

    Each fault type perturbs its own small attribute group; shift, noise,
    anomaly rate, and fault mix are exposed so experiments can dial the
    difficulty and the class imbalance independently.
    """
    quarter = max(2, d // 10)
    groups = [tuple(range(i * quarter, (i + 1) * quarter)) for i in range(4)]
    shifts = (shift,) * quarter
    return SynthConfig(
        d=d,
        informative=tuple((c + 1, groups[c], shifts) for c in range(4)),
        anomaly_rate=rate,
        class_mix=mix,
        noise_sigma=noise,
        seed=seed,
        class_names=tuple(DEFAULT_CLASS_NAMES),
    )


def config_to_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    if cfg.synth is not None:
        d["synth"] = asdict(cfg.synth)
    return d


def config_from_dict(d: dict) -> RunConfig:
    d = dict(d)
    synth = d.get("synth")
    if synth is not None:
        synth = dict(synth)
        synth["informative"] = tuple(
            (int(c), tuple(i), tuple(s)) for c, i, s in synth["informative"]
        )
        synth["class_mix"] = tuple(synth["class_mix"])
        synth["class_names"] = tuple(synth["class_names"])
        d["synth"] = SynthConfig(**synth)
    return RunConfig(**d)


def build_detector(
    cfg: RunConfig, d: int, class_names, calibration_values=None
) -> tuple[BinaryDetector | MulticlassDetector, float]:
    """Construct the initial detector; returns (detector, alpha actually used).

    With calibration_values (the first batch's n x d matrix) present and
    biased init on, alpha shrinks below cfg.alpha just far enough that the
    untrained detector flags a workable share of the batch — an all-normal
    start would never send anything to the labeler.
    """
    rng = np.random.default_rng(cfg.seed)
    schedule = LrSchedule()
    stop = StopRule(tol=cfg.tol, max_iters=cfg.max_iters)
    alpha = cfg.alpha if cfg.biased_init else 0.0
    if cfg.model == "l1ls":
        gauss = rng.standard_normal(d + 1)
        if cfg.biased_init and calibration_values is not None:
            alpha = calibrate_alpha(gauss, alpha, calibration_values)
        return (
            BinaryDetector(w=gauss + alpha, lam=cfg.lam, schedule=schedule, stop=stop),
            alpha,
        )
    C = len(class_names)
    penalty = PENALTY_L1 if cfg.model == "mcl1ls" else PENALTY_L21
    gauss = rng.standard_normal((d + 1, C))
    if cfg.biased_init and calibration_values is not None:
        alpha = calibrate_alpha(gauss, alpha, calibration_values)
    W = gauss.copy()
    W[:, 0] += alpha
    W[:, 1:] -= alpha
    return (
        MulticlassDetector(
            W=W, lam=cfg.lam, penalty=penalty, schedule=schedule, stop=stop,
            class_names=tuple(class_names),
        ),
        alpha,
    )


def load_epochs(cfg: RunConfig) -> tuple[list[LabeledEpoch], tuple[str, ...], tuple[str, ...]]:
    """Materialize the run's epochs plus attribute and class names."""
    if cfg.input_csv is not None:
        class_names = (
            tuple(cfg.synth.class_names) if cfg.synth is not None
            else tuple(DEFAULT_CLASS_NAMES)
        )
        if cfg.model == "l1ls":
            class_names = BINARY_CLASS_NAMES
        ds = load_csv(cfg.input_csv, class_names=list(class_names))
        if ds.batch.labels is None:
            raise ValueError("replay requires a labeled input CSV")
        stats = fit_norm(Batch(records=ds.batch.records[: cfg.epoch_size]))
        normed, _ = apply_norm(ds.batch, stats)
        ds = Dataset(batch=normed, attribute_names=ds.attribute_names)
        return epochs_from_dataset(ds, cfg.epoch_size), ds.attribute_names, class_names
    synth = cfg.synth or default_synth_config(cfg.seed)
    if cfg.model == "l1ls":
        # collapse anomaly classes onto one label for the binary detector
        epochs = synth_stream(synth, cfg.epochs, cfg.epoch_size)
        from .model import ClassLabel

        collapsed = []
        for e in epochs:
            truth = tuple(
                ClassLabel(0, "normal") if t.is_normal else ClassLabel(1, "anomaly")
                for t in e.truth
            )
            collapsed.append(LabeledEpoch(batch=e.batch, truth=truth))
        return collapsed, synth_attribute_names(synth.d), BINARY_CLASS_NAMES
    epochs = synth_stream(synth, cfg.epochs, cfg.epoch_size)
    return epochs, synth_attribute_names(synth.d), tuple(synth.class_names)


@dataclass
class RunResult:
    config: RunConfig
    reports: list
    state: EvolutionState
    alpha_used: float = 0.0
    out_dir: Path | None = None


def _all_evolving_epoch(state, epoch, oracle, evo_cfg):
    """All-evolving comparator: every record is labeled and used for the update."""
    from .evolution import fit_verified, flag_predictions, epoch_metrics

    flags = flag_predictions(state.detector, epoch.batch, evo_cfg)
    records = list(epoch.batch.records)
    verdicts = oracle.verify(records, [None] * len(records))
    labels = [v.label for v in verdicts]
    detector, warnings = fit_verified(
        state.detector, records, labels, evo_cfg.smote, state.epochs_run
    )
    records_seen = state.records_seen + len(records)
    verdicts_seen = state.verdicts_seen + len(records)
    metrics, auc_val, _ = epoch_metrics(
        state.detector, flags, epoch.batch, epoch.truth, {}
    )
    from .evolution import EpochReport

    verdict_counts: dict[str, int] = {}
    C = 2 if len(evo_cfg.class_names) == 2 else len(evo_cfg.class_names)
    class_counts = list(state.verdict_class_counts or (0,) * C)
    for lbl in labels:
        verdict_counts[lbl.class_name] = verdict_counts.get(lbl.class_name, 0) + 1
        class_counts[lbl.class_index] += 1

    report = EpochReport(
        epoch_index=state.epochs_run,
        n=len(records),
        flagged=len(records),  # every record goes to the labeler by definition
        missed=0,
        verdict_counts=verdict_counts,
        labeled_fraction_cumulative=verdicts_seen / records_seen,
        metrics=metrics,
        partial=False,
        auc=auc_val,
        warnings=warnings,
    )
    next_state = replace(
        state,
        detector=detector,
        records_seen=records_seen,
        verdicts_seen=verdicts_seen,
        epochs_run=state.epochs_run + 1,
        verdict_class_counts=tuple(class_counts),
    )
    return next_state, report


def run_replay(cfg: RunConfig, out_dir: str | Path | None = None) -> RunResult:
    """Run the evolution loop over every epoch with an oracle labeler."""
    epochs, attr_names, class_names = load_epochs(cfg)
    d = epochs[0].batch.d
    detector, alpha_used = build_detector(
        cfg, d, class_names, calibration_values=epochs[0].batch.values_matrix()
    )
    truth_by_id = {r.id: t for e in epochs for r, t in zip(e.batch.records, e.truth)}
    oracle = OracleLabeler(
        truth_by_id=truth_by_id,
        class_names=tuple(class_names),
        flip_probability=cfg.oracle_flip_probability,
        seed=cfg.seed,
    )
    smote = (
        SmoteConfig(k_neighbors=cfg.smote_k, amount_ratio=cfg.smote_ratio, seed=cfg.seed)
        if cfg.smote
        else None
    )
    evo_cfg = EvolutionConfig(
        class_names=tuple(class_names),
        smote=smote,
        margin_tau=cfg.margin_tau,
        bootstrap_fraction=cfg.bootstrap_fraction,
    )
    state = EvolutionState(detector=detector)
    reports = []
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(out, cfg)

    for epoch in epochs:
        before = state
        if cfg.self_evolving:
            state, report = run_epoch(state, epoch.batch, oracle, evo_cfg, truth=epoch.truth)
        else:
            state, report = _all_evolving_epoch(state, epoch, oracle, evo_cfg)
        reports.append(report)
        if out is not None:
            append_report(out / "reports.jsonl", report)
            # pre-update detector: the same scores the report's AUC used
            _write_epoch_roc(out, before, epoch, report)

    if out is not None:
        (out / "weights.txt").write_text(weights_to_text(state.detector))
        (out / "ranking.csv").write_text(
            ranking_to_csv(rank_detector(state.detector, attr_names))
        )
        summary = summarize(cfg, reports)
        summary["alpha_used"] = alpha_used
        (out / "summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n"
        )
        _write_auc_series(out, reports)
    return RunResult(
        config=cfg, reports=reports, state=state, alpha_used=alpha_used, out_dir=out
    )


def _write_epoch_roc(out: Path, state, epoch, report) -> None:
    """Per-epoch ROC, anomaly vs normal, from the same pre-update detector
    whose scores produced the report's AUC."""
    from .evolution import anomaly_scores, flag_predictions

    truth_anomaly = [not t.is_normal for t in epoch.truth]
    if not (any(truth_anomaly) and not all(truth_anomaly)):
        return
    flags = flag_predictions(
        state.detector, epoch.batch, EvolutionConfig(class_names=("normal", "anomaly"))
    )
    scores = anomaly_scores(state.detector, flags)
    curve = roc_curve(scores, truth_anomaly, positive=True)
    (out / f"roc_epoch{report.epoch_index:03d}.csv").write_text(roc_to_csv(curve))


def _write_auc_series(out: Path, reports) -> None:
    lines = ["epoch,auc"]
    for r in reports:
        lines.append(f"{r.epoch_index},{'' if r.auc is None else repr(r.auc)}")
    (out / "auc.csv").write_text("\n".join(lines) + "\n")


def summarize(cfg: RunConfig, reports, window: int = 5) -> dict:
    """Mean last-`window`-epoch metrics: the run's headline numbers."""
    tail = reports[-window:]

    def mean_of(key):
        vals = [r.metrics.get(key) for r in tail if r.metrics.get(key) is not None]
        return None if not vals else float(np.mean(vals))

    if cfg.model == "l1ls":
        sens, spec, acc = mean_of("sensitivity"), mean_of("specificity"), mean_of("accuracy")
    else:
        sens, spec, acc = (
            mean_of("macro_sensitivity"),
            mean_of("macro_specificity"),
            mean_of("macro_accuracy"),
        )
    aucs = [r.auc for r in tail if r.auc is not None]
    return {
        "model": cfg.model,
        "epochs": len(reports),
        "window": min(window, len(reports)),
        "mean_sensitivity": sens,
        "mean_specificity": spec,
        "mean_accuracy": acc,
        "mean_auc": None if not aucs else float(np.mean(aucs)),
        "labeled_fraction_window": labeled_fraction(list(reports), window),
        "labeled_fraction_cumulative": reports[-1].labeled_fraction_cumulative,
    }


def write_manifest(out: Path, cfg: RunConfig) -> None:
    manifest = {
        "config": config_to_dict(cfg),
        "code_version": __version__,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


def run_ablation(
    cfg: RunConfig,
    out_dir: str | Path | None = None,
    axes: tuple[str, ...] = ("smote", "biased_init", "self_evolving"),
) -> list[dict]:
    """One replay per toggle combination; rows mirror the ablation matrix."""
    for axis in axes:
        if axis not in ("smote", "biased_init", "self_evolving"):
            raise ValueError(f"unknown ablation axis {axis!r}")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(out, cfg)
    rows = []
    n_axes = len(axes)
    for mask in range(2 ** n_axes):
        toggles = {axis: bool(mask & (1 << i)) for i, axis in enumerate(axes)}
        cell_cfg = replace(cfg, **toggles)
        cell_name = "_".join(
            f"{axis}={'on' if v else 'off'}" for axis, v in sorted(toggles.items())
        )
        try:
            result = run_replay(cell_cfg, out_dir=None)
            row = {"cell": cell_name, **toggles, **summarize(cell_cfg, result.reports)}
        except Exception as exc:  # noqa: BLE001 - grid cells fail independently
            row = {"cell": cell_name, **toggles, "error": str(exc)}
        rows.append(row)
    if out is not None:
        _write_ablation_csv(out / "ablation.csv", rows, axes)
        (out / "ablation.json").write_text(
            json.dumps(rows, indent=2, sort_keys=True) + "\n"
        )
    return rows


def _write_ablation_csv(path: Path, rows, axes) -> None:
    cols = list(axes) + [
        "mean_sensitivity", "mean_specificity", "mean_accuracy",
        "mean_auc", "labeled_fraction_window", "error",
    ]
    lines = ["cell," + ",".join(cols)]
    for row in rows:
        cells = [row["cell"]]
        for c in cols:
            v = row.get(c)
            cells.append("" if v is None else str(v))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def run_sweep(
    cfg: RunConfig,
    out_dir: str | Path | None = None,
    lambdas=DEFAULT_LAMBDAS,
    top_k: int = 10,
) -> dict:
    """Fit-per-lambda attribute rankings over the run's pooled labeled data."""
    epochs, attr_names, class_names = load_epochs(cfg)
    records = tuple(r for e in epochs for r in e.batch.records)
    labels = tuple(t for e in epochs for t in e.truth)
    batch = Batch(records=records, labels=labels)
    table = lambda_sweep(
        batch,
        attr_names,
        lambdas=lambdas,
        top_k=top_k,
        kind=cfg.model,
        seed=cfg.seed,
        stop=StopRule(tol=cfg.tol, max_iters=cfg.max_iters),
        C=len(class_names),
    )
    result = {
        "top_k": top_k,
        "cells": [
            {
                "lambda": cell.lam,
                "error": cell.error,
                "ranking": None
                if cell.ranking is None
                else [[name, imp] for name, imp in cell.ranking.entries],
            }
            for cell in table.cells
        ],
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(out, cfg)
        (out / "sweep.json").write_text(
            json.dumps(result, indent=2, sort_keys=True) + "\n"
        )
        for cell in table.cells:
            if cell.ranking is not None:
                name = f"ranking_lambda_{cell.lam:g}.csv"
                (out / name).write_text(ranking_to_csv(cell.ranking))
    return result
