"""Event-sourced service state: one writer, a JSON-lines log, exact replay.

Every mutation is an event appended to the log and then applied to the
in-memory state, so restarting the process and replaying the log lands
on exactly the same queue, counters, and weights. Live-side decisions
(when to start an epoch, what to flag, when to commit) happen once, at
event-creation time; a restore only re-applies recorded outcomes and
never re-decides anything.
"""

from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..data_io import LabeledEpoch, NormStats, apply_norm, epochs_from_dataset, fit_norm, load_csv
from ..detectors import (
    PENALTY_L1,
    PENALTY_L21,
    BinaryDetector,
    MulticlassDetector,
    detector_from_text,
    weights_to_text,
)
from ..evolution import (
    BINARY_CLASS_NAMES,
    EpochReport,
    EvolutionConfig,
    EvolutionState,
    FlagResult,
    epoch_metrics,
    fit_verified,
    flag_predictions,
    needs_bootstrap,
    report_from_dict,
    report_to_dict,
)
from ..features import rank_detector
from ..imbalance import SmoteConfig
from ..model import NORMAL_CLASS_INDEX, Batch, ClassLabel, Record
from ..solver import LrSchedule, StopRule
from .config import ServiceConfig


class ServiceError(Exception):
    """API-mappable failure: an HTTP status plus a machine-readable code."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class OpenEpoch:
    """The epoch currently awaiting verdicts."""

    index: int
    batch: Batch  # normalized
    pred_indices: list[int] = field(default_factory=list)
    scores: list = field(default_factory=list)
    flagged_ids: list[str] = field(default_factory=list)
    suggested: dict[str, ClassLabel] = field(default_factory=dict)
    verdicts: dict[str, ClassLabel] = field(default_factory=dict)
    deadline: float | None = None  # monotonic clock; never persisted

    def unanswered(self) -> list[str]:
        return [rid for rid in self.flagged_ids if rid not in self.verdicts]


class ServiceCore:
    """Single-detector service state; all mutations funnel through one lock."""

    def __init__(self, cfg: ServiceConfig, log_path=None):
        self.cfg = cfg
        self.lock = threading.RLock()
        self.log_path = Path(log_path if log_path is not None else cfg.event_log)
        self._log_fh = None

        if cfg.mode == "replay":
            self.replay_feed, self.attribute_names = self._load_replay_feed()
            self.truth_by_id = {
                r.id: t
                for e in self.replay_feed
                for r, t in zip(e.batch.records, e.truth)
            }
        else:
            self.replay_feed = []
            self.attribute_names = tuple(cfg.attribute_names)
            self.truth_by_id = {}
        self.d = len(self.attribute_names)
        if cfg.model == "l1ls":
            self.class_names = (
                tuple(cfg.class_names) if len(cfg.class_names) == 2 else BINARY_CLASS_NAMES
            )
        else:
            self.class_names = tuple(cfg.class_names)
        self.C = len(self.class_names)

        self.smote_cfg = (
            SmoteConfig(k_neighbors=cfg.smote_k, amount_ratio=cfg.smote_ratio, seed=cfg.seed)
            if cfg.smote
            else None
        )
        self.evo_cfg = EvolutionConfig(
            class_names=self.class_names,
            margin_tau=cfg.margin_tau,
            bootstrap_fraction=cfg.bootstrap_fraction,
        )
        self._stop = StopRule(tol=cfg.tol, max_iters=cfg.max_iters)
        self.detector = self._initial_detector()

        # state below is rebuilt from the event log on restart
        self.seq = 0
        self.buffer: list[Record] = []
        self.ingested_total = 0
        self.seen_ids: set[str] = set()
        self.norm_stats: NormStats | None = None
        self.open_epoch: OpenEpoch | None = None
        self.queue: list[dict] = []
        self.queue_by_id: dict[str, dict] = {}
        self.reports: list[EpochReport] = []
        self.records_seen = 0
        self.verdicts_seen = 0
        self.epochs_run = 0
        self.verdict_class_counts: tuple[int, ...] = ()
        self.predicted_normal_ids: set[str] = set()
        self.missed_reported_ids: set[str] = set()
        self.pending_missed: list[tuple[Record, ClassLabel]] = []
        self.values_by_id: dict[str, tuple[float, ...]] = {}
        # set while an epoch_report has been applied but its weights
        # snapshot has not: the update set a crash may have left unfitted
        self._unsnapshotted: tuple[list[Record], list[ClassLabel], int] | None = None

        self._restore()
        with self.lock:
            self._heal()
            self._drive()

    def close(self) -> None:
        with self.lock:
            if self._log_fh is not None:
                self._log_fh.close()
                self._log_fh = None

    # ---------- construction helpers ----------

    def _initial_detector(self):
        """The biased (or plain Gaussian) start, same draw as the runner's."""
        rng = np.random.default_rng(self.cfg.seed)
        schedule = LrSchedule()
        alpha = self.cfg.alpha if self.cfg.biased_init else 0.0
        if self.cfg.model == "l1ls":
            w = rng.standard_normal(self.d + 1) + alpha
            return BinaryDetector(w=w, lam=self.cfg.lam, schedule=schedule, stop=self._stop)
        penalty = PENALTY_L1 if self.cfg.model == "mcl1ls" else PENALTY_L21
        W = rng.standard_normal((self.d + 1, self.C))
        W[:, 0] += alpha
        W[:, 1:] -= alpha
        return MulticlassDetector(
            W=W, lam=self.cfg.lam, penalty=penalty, schedule=schedule,
            stop=self._stop, class_names=self.class_names,
        )

    def _load_replay_feed(self) -> tuple[list[LabeledEpoch], tuple[str, ...]]:
        """Raw full-size epochs from the replay CSV; a partial tail stays unfed."""
        cfg = self.cfg
        ds = load_csv(cfg.input_csv, class_names=list(cfg.class_names))
        if ds.batch.labels is None:
            raise ValueError("replay mode requires a labeled input CSV")
        epochs = [
            e for e in epochs_from_dataset(ds, cfg.epoch_size)
            if len(e.batch) == cfg.epoch_size
        ]
        if cfg.model == "l1ls":
            epochs = [
                LabeledEpoch(
                    batch=e.batch,
                    truth=tuple(
                        ClassLabel(0, "normal") if t.is_normal else ClassLabel(1, "anomaly")
                        for t in e.truth
                    ),
                )
                for e in epochs
            ]
        return epochs, ds.attribute_names

    # ---------- event log plumbing ----------

    def _append(self, ev: dict) -> None:
        self.seq += 1
        ev = {"seq": self.seq, **ev}
        if self._log_fh is None:
            self._log_fh = self.log_path.open("a")
        self._log_fh.write(json.dumps(ev, sort_keys=True) + "\n")
        self._log_fh.flush()
        self._apply(ev)

    def _restore(self) -> None:
        if not self.log_path.exists():
            return
        with self.log_path.open() as fh:
            lines = fh.read().splitlines()
        for i, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                ev = json.loads(line)
            except json.JSONDecodeError:
                if i == len(lines) - 1:
                    break  # torn tail from a crash mid-write: drop it
                raise ValueError(f"{self.log_path}: corrupt event at line {i + 1}")
            if ev["seq"] != self.seq + 1:
                raise ValueError(
                    f"{self.log_path}: sequence gap at line {i + 1} "
                    f"(expected {self.seq + 1}, got {ev['seq']})"
                )
            self.seq = ev["seq"]
            self._apply(ev)

    def _heal(self) -> None:
        """Regenerate a weights snapshot lost to a crash mid-commit.

        The fit is deterministic given the logged verdicts and the
        detector state the log prefix reproduces, so the regenerated
        snapshot is identical to the one the crash destroyed.
        """
        if self._unsnapshotted is None:
            return
        records, labels, epoch_index = self._unsnapshotted
        fitted, _ = fit_verified(self.detector, records, labels, self.smote_cfg, epoch_index)
        self._append(self._snapshot_event(epoch_index, fitted))

    def _apply(self, ev: dict) -> None:
        kind = ev["type"]
        if kind == "ingested":
            for item in ev["records"]:
                self.buffer.append(Record(id=item["id"], values=tuple(item["values"])))
                self.seen_ids.add(item["id"])
            self.ingested_total += len(ev["records"])
        elif kind == "epoch_started":
            ids = list(ev["record_ids"])
            take = self.buffer[: len(ids)]
            if [r.id for r in take] != ids:
                raise ValueError(
                    f"{self.log_path}: epoch {ev['epoch']} does not match the buffer"
                )
            self.buffer = self.buffer[len(ids):]
            raw = Batch(records=tuple(take))
            if self.norm_stats is None:  # fitted once, on the first epoch
                self.norm_stats = fit_norm(raw)
            normed, _ = apply_norm(raw, self.norm_stats)
            self.open_epoch = OpenEpoch(index=int(ev["epoch"]), batch=normed)
            self.records_seen += len(ids)
            for r in normed.records:
                self.values_by_id[r.id] = r.values
        elif kind == "flagged":
            oe = self.open_epoch
            oe.pred_indices = [int(i) for i in ev["pred_indices"]]
            oe.scores = ev["scores"]
            oe.flagged_ids = [item["record_id"] for item in ev["items"]]
            for item in ev["items"]:
                label = ClassLabel(int(item["suggested_index"]), item["suggested_name"])
                oe.suggested[item["record_id"]] = label
                entry = {
                    "record_id": item["record_id"],
                    "values": list(self.values_by_id[item["record_id"]]),
                    "suggested": label,
                    "scores": list(item["scores"]),
                    "epoch_index": oe.index,
                    "status": "pending",
                    "verdict": None,
                    "verdict_time": None,
                }
                self.queue.append(entry)
                self.queue_by_id[entry["record_id"]] = entry
            flagged = set(oe.flagged_ids)
            for i, r in enumerate(oe.batch.records):
                if r.id not in flagged and oe.pred_indices[i] == NORMAL_CLASS_INDEX:
                    self.predicted_normal_ids.add(r.id)
            if self.cfg.verification_timeout_s is not None:
                oe.deadline = time.monotonic() + self.cfg.verification_timeout_s
        elif kind == "verdict":
            entry = self.queue_by_id[ev["record_id"]]
            label = ClassLabel(int(ev["class_index"]), ev["class_name"])
            entry["status"] = "verified"
            entry["verdict"] = label
            entry["verdict_time"] = ev["verdict_time"]
            if self.open_epoch is not None and ev["record_id"] in self.open_epoch.suggested:
                self.open_epoch.verdicts[ev["record_id"]] = label
        elif kind == "missed":
            record = Record(id=ev["record_id"], values=tuple(ev["values"]))
            label = ClassLabel(int(ev["class_index"]), ev["class_name"])
            self.pending_missed.append((record, label))
            self.missed_reported_ids.add(record.id)
        elif kind == "epoch_report":
            report = report_from_dict(ev["report"])
            records, labels = self._update_set()
            self._unsnapshotted = (records, labels, self.open_epoch.index)
            self.reports.append(report)
            counts = list(self.verdict_class_counts or (0,) * self.C)
            for lbl in labels:
                counts[lbl.class_index] += 1
            self.verdict_class_counts = tuple(counts)
            self.verdicts_seen += len(labels)
            self.pending_missed = []
            self.epochs_run += 1
            self.open_epoch = None
        elif kind == "snapshot":
            schedule = LrSchedule(**ev["schedule"])
            self.detector = detector_from_text(
                ev["weights"], schedule=schedule, stop=self._stop,
                class_names=None if self.cfg.model == "l1ls" else self.class_names,
            )
            self._unsnapshotted = None
        else:
            raise ValueError(f"{self.log_path}: unknown event type {kind!r}")

    # ---------- the loop ----------

    def _update_set(self) -> tuple[list[Record], list[ClassLabel]]:
        """Verified flagged records (flag order) plus queued missed reports."""
        oe = self.open_epoch
        by_id = {r.id: r for r in oe.batch.records}
        records = [by_id[rid] for rid in oe.flagged_ids if rid in oe.verdicts]
        labels = [oe.verdicts[rid] for rid in oe.flagged_ids if rid in oe.verdicts]
        for rec, lbl in self.pending_missed:
            records.append(rec)
            labels.append(lbl)
        return records, labels

    def _next_replay_epoch(self) -> LabeledEpoch | None:
        i = self.ingested_total // self.cfg.epoch_size
        return self.replay_feed[i] if i < len(self.replay_feed) else None

    def _drive(self) -> None:
        """Advance the loop until it needs verdicts or data from outside."""
        while True:
            feeding = (
                self.cfg.mode == "replay"
                and self.open_epoch is None
                and len(self.buffer) < self.cfg.epoch_size
            )
            if feeding:
                nxt = self._next_replay_epoch()
                if nxt is not None:
                    self._append({
                        "type": "ingested",
                        "records": [
                            {"id": r.id, "values": list(r.values)}
                            for r in nxt.batch.records
                        ],
                    })
                    continue
            if self.open_epoch is None and len(self.buffer) >= self.cfg.epoch_size:
                ids = [r.id for r in self.buffer[: self.cfg.epoch_size]]
                self._append({
                    "type": "epoch_started", "epoch": self.epochs_run, "record_ids": ids,
                })
                self._flag_open_epoch()
                continue
            oe = self.open_epoch
            if oe is not None and not oe.unanswered():
                self._commit_epoch()
                continue
            if oe is not None and self.cfg.mode == "replay" and self.cfg.replay_oracle:
                for rid in oe.unanswered():
                    truth = self.truth_by_id[rid]
                    self._append({
                        "type": "verdict",
                        "record_id": rid,
                        "class_index": truth.class_index,
                        "class_name": truth.class_name,
                        "verdict_time": time.time(),
                    })
                continue
            break

    def _flag_open_epoch(self) -> None:
        oe = self.open_epoch
        pseudo = EvolutionState(
            detector=self.detector, verdict_class_counts=self.verdict_class_counts
        )
        quota = 0
        if needs_bootstrap(pseudo, self.evo_cfg):
            quota = math.ceil(self.evo_cfg.bootstrap_fraction * len(oe.batch))
        flags = flag_predictions(self.detector, oe.batch, self.evo_cfg, explore_quota=quota)
        items = []
        for pos, i in enumerate(flags.flagged_indices):
            s = flags.scores[i]
            items.append({
                "record_id": oe.batch.records[i].id,
                "suggested_index": flags.suggested[pos].class_index,
                "suggested_name": flags.suggested[pos].class_name,
                "scores": [float(s)] if np.ndim(s) == 0 else [float(v) for v in s],
            })
        self._append({
            "type": "flagged",
            "epoch": oe.index,
            "pred_indices": [int(i) for i in flags.pred_indices],
            "scores": self._scores_to_json(flags.scores),
            "items": items,
        })

    @staticmethod
    def _scores_to_json(scores: np.ndarray):
        if scores.ndim == 1:
            return [float(v) for v in scores]
        return [[float(v) for v in row] for row in scores]

    def _flag_result(self, oe: OpenEpoch) -> FlagResult:
        pos = {r.id: i for i, r in enumerate(oe.batch.records)}
        return FlagResult(
            pred_indices=np.array(oe.pred_indices, dtype=int),
            scores=np.array(oe.scores, dtype=float),
            flagged_indices=tuple(pos[rid] for rid in oe.flagged_ids),
            suggested=tuple(oe.suggested[rid] for rid in oe.flagged_ids),
        )

    def _commit_epoch(self) -> None:
        """Fit on the verified set, publish the report, snapshot the weights."""
        oe = self.open_epoch
        records, labels = self._update_set()
        pre = self.detector
        fitted, warnings = fit_verified(pre, records, labels, self.smote_cfg, oe.index)
        truth = None
        if self.cfg.mode == "replay":
            truth = tuple(self.truth_by_id[r.id] for r in oe.batch.records)
        metrics, auc_val, partial = epoch_metrics(
            pre, self._flag_result(oe), oe.batch, truth, dict(oe.verdicts)
        )
        verdict_counts: dict[str, int] = {}
        for lbl in labels:
            verdict_counts[lbl.class_name] = verdict_counts.get(lbl.class_name, 0) + 1
        report = EpochReport(
            epoch_index=oe.index,
            n=len(oe.batch),
            flagged=len(oe.flagged_ids),
            missed=len(self.pending_missed),
            verdict_counts=verdict_counts,
            labeled_fraction_cumulative=(
                (self.verdicts_seen + len(labels)) / self.records_seen
            ),
            metrics=metrics,
            partial=partial,
            auc=auc_val,
            warnings=warnings,
        )
        self._append({
            "type": "epoch_report", "epoch": oe.index, "report": report_to_dict(report),
        })
        self._append(self._snapshot_event(report.epoch_index, fitted))

    def _snapshot_event(self, epoch_index: int, detector) -> dict:
        return {
            "type": "snapshot",
            "epoch": epoch_index,
            "weights": weights_to_text(detector),
            "schedule": asdict(detector.schedule),
        }

    def _check_timeout(self) -> None:
        oe = self.open_epoch
        if (
            oe is not None
            and oe.deadline is not None
            and oe.unanswered()
            and time.monotonic() >= oe.deadline
        ):
            self._commit_epoch()
            self._drive()

    # ---------- API surface ----------

    def ingest(self, records: list[dict], attribute_names=None) -> dict:
        with self.lock:
            self._check_timeout()
            if self.cfg.mode == "replay":
                raise ServiceError(
                    409, "replay_mode", "replay mode feeds itself from its input file"
                )
            if attribute_names is not None and tuple(attribute_names) != self.attribute_names:
                for got, want in zip(attribute_names, self.attribute_names):
                    if got != want:
                        raise ServiceError(
                            422, "schema_mismatch",
                            f"attribute {got!r} does not match the schema ({want!r} expected)",
                        )
                raise ServiceError(
                    422, "schema_mismatch",
                    f"{len(attribute_names)} attribute names for a schema of {self.d}",
                )
            resolved = []
            for item in records:
                values = item["values"]
                if len(values) != self.d:
                    raise ServiceError(
                        422, "schema_mismatch",
                        f"record has {len(values)} values, the schema expects {self.d}",
                    )
                rid = item.get("id") or f"rec{self.ingested_total + len(resolved):08d}"
                if rid in self.seen_ids:
                    raise ServiceError(
                        409, "duplicate_record", f"record id {rid!r} was already ingested"
                    )
                try:
                    Record(id=rid, values=tuple(float(v) for v in values))
                except (TypeError, ValueError) as exc:
                    raise ServiceError(422, "invalid_values", str(exc)) from None
                resolved.append({"id": rid, "values": [float(v) for v in values]})
            started_before = self.epochs_run + (1 if self.open_epoch else 0)
            if resolved:
                self._append({"type": "ingested", "records": resolved})
            self._drive()
            started_after = self.epochs_run + (1 if self.open_epoch else 0)
            return {
                "accepted": len(resolved),
                "buffered": len(self.buffer),
                "epochs_triggered": started_after - started_before,
            }

    def get_queue(self, status=None, page=0, page_size=50) -> dict:
        with self.lock:
            self._check_timeout()
            if status not in (None, "pending", "verified"):
                raise ServiceError(
                    422, "invalid_status",
                    f"status filter must be 'pending' or 'verified', got {status!r}",
                )
            rows = [e for e in self.queue if status is None or e["status"] == status]
            start = page * page_size
            names = list(self.attribute_names)
            items = [
                {
                    "record_id": e["record_id"],
                    "values": list(e["values"]),
                    "attribute_names": names,
                    "suggested_class": e["suggested"].class_name,
                    "scores": list(e["scores"]),
                    "epoch_index": e["epoch_index"],
                    "status": e["status"],
                    "verdict_class": e["verdict"].class_name if e["verdict"] else None,
                    "verdict_time": e["verdict_time"],
                }
                for e in rows[start : start + page_size]
            ]
            return {
                "items": items, "total": len(rows), "page": page, "page_size": page_size,
            }

    def post_verdict(self, record_id: str, class_name: str) -> dict:
        with self.lock:
            self._check_timeout()
            entry = self.queue_by_id.get(record_id)
            if entry is None:
                raise ServiceError(404, "unknown_record", f"no flagged record {record_id!r}")
            if entry["status"] == "verified":
                raise ServiceError(
                    409, "duplicate_verdict",
                    f"record {record_id!r} is already verified; the first verdict stands",
                )
            if self.open_epoch is None or entry["epoch_index"] != self.open_epoch.index:
                raise ServiceError(
                    409, "epoch_closed",
                    f"epoch {entry['epoch_index']} was already committed",
                )
            if class_name not in self.class_names:
                raise ServiceError(
                    422, "invalid_class",
                    f"class {class_name!r} not in {list(self.class_names)}",
                )
            self._append({
                "type": "verdict",
                "record_id": record_id,
                "class_index": self.class_names.index(class_name),
                "class_name": class_name,
                "verdict_time": time.time(),
            })
            before = self.epochs_run
            self._drive()
            return {
                "record_id": record_id,
                "status": "verified",
                "epoch_committed": self.epochs_run > before,
            }

    def post_missed(self, record_id: str, class_name: str) -> dict:
        with self.lock:
            self._check_timeout()
            if record_id in self.missed_reported_ids:
                raise ServiceError(
                    409, "already_reported", f"record {record_id!r} was already reported"
                )
            if record_id not in self.predicted_normal_ids:
                if record_id in self.queue_by_id:
                    raise ServiceError(
                        409, "record_flagged",
                        f"record {record_id!r} was flagged; it takes a queue verdict, "
                        "not a missed report",
                    )
                raise ServiceError(
                    404, "unknown_record",
                    f"record {record_id!r} was never predicted normal",
                )
            if class_name not in self.class_names:
                raise ServiceError(
                    422, "invalid_class",
                    f"class {class_name!r} not in {list(self.class_names)}",
                )
            idx = self.class_names.index(class_name)
            if idx == NORMAL_CLASS_INDEX:
                raise ServiceError(
                    422, "invalid_class", "only failures are reportable; class is normal"
                )
            self._append({
                "type": "missed",
                "record_id": record_id,
                "class_index": idx,
                "class_name": class_name,
                "values": list(self.values_by_id[record_id]),
            })
            return {"record_id": record_id, "status": "queued"}

    def get_metrics(self, start=0, count=None) -> dict:
        with self.lock:
            self._check_timeout()
            stop = len(self.reports) if count is None else start + count
            return {
                "reports": [report_to_dict(r) for r in self.reports[start:stop]],
                "total": len(self.reports),
            }

    def get_weights(self) -> dict:
        with self.lock:
            self._check_timeout()
            return {
                "model": self.detector.kind,
                "lam": self.detector.lam,
                "epochs_run": self.epochs_run,
                "weights": weights_to_text(self.detector),
                "schedule": asdict(self.detector.schedule),
            }

    def get_features(self, top_k: int = 10) -> dict:
        with self.lock:
            self._check_timeout()
            ranking = rank_detector(self.detector, self.attribute_names)
            return {
                "lam": ranking.lam,
                "kind": ranking.kind,
                "entries": [
                    {"rank": i, "attribute": name, "weight": imp}
                    for i, (name, imp) in enumerate(ranking.top(top_k), start=1)
                ],
            }

    def get_status(self) -> dict:
        with self.lock:
            self._check_timeout()
            oe = self.open_epoch
            return {
                "mode": self.cfg.mode,
                "model": self.cfg.model,
                "class_names": list(self.class_names),
                "attribute_names": list(self.attribute_names),
                "epoch_size": self.cfg.epoch_size,
                "epochs_run": self.epochs_run,
                "records_seen": self.records_seen,
                "verdicts_seen": self.verdicts_seen,
                "labeled_fraction_cumulative": (
                    self.verdicts_seen / self.records_seen if self.records_seen else 0.0
                ),
                "buffered": len(self.buffer),
                "open_epoch": None if oe is None else {
                    "epoch_index": oe.index,
                    "flagged": len(oe.flagged_ids),
                    "verified": len(oe.verdicts),
                    "pending": len(oe.unanswered()),
                },
                "replay_exhausted": (
                    self.cfg.mode == "replay" and self._next_replay_epoch() is None
                ),
            }
