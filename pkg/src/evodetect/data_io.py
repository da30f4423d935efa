"""CSV ingestion, min-max normalization, and a synthetic fault-stream generator.

Normalization statistics are fitted once (on the first epoch of a run)
and frozen; later values outside the fitted range clamp to [0,1] and the
clamp is reported, so a drifting stream cannot silently reshape the
detector's input space.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import DEFAULT_CLASS_NAMES, Batch, ClassLabel, Record, make_labels


@dataclass(frozen=True)
class Dataset:
    """A parsed batch plus the attribute names from the CSV header."""

    batch: Batch
    attribute_names: tuple[str, ...]


def load_csv(path, class_names: list[str] | None = None) -> Dataset:
    """Parse a CSV with an attribute-name header.

    An optional leading "id" column names records (row numbers otherwise)
    and an optional trailing "label" column, with values drawn from
    class_names, makes the batch labeled.
    """
    class_names = list(class_names or DEFAULT_CLASS_NAMES)
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    has_id = bool(header) and header[0] == "id"
    has_label = bool(header) and header[-1] == "label"
    lo = 1 if has_id else 0
    hi = len(header) - 1 if has_label else len(header)
    attr_names = tuple(header[lo:hi])
    if not attr_names:
        raise ValueError(f"{path}: no attribute columns in header")

    records, labels = [], []
    for rownum, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValueError(
                f"{path} row {rownum}: {len(row)} cells, header has {len(header)}"
            )
        rid = row[0].strip() if has_id else f"row{rownum}"
        try:
            values = tuple(float(c) for c in row[lo:hi])
        except ValueError:
            raise ValueError(f"{path} row {rownum}: non-numeric attribute cell") from None
        records.append(Record(id=rid, values=values))
        if has_label:
            name = row[-1].strip()
            if name not in class_names:
                raise ValueError(
                    f"{path} row {rownum}: unknown label {name!r} "
                    f"(expected one of {class_names})"
                )
            labels.append(ClassLabel(class_names.index(name), name))
    batch = Batch(records=tuple(records), labels=tuple(labels) if has_label else None)
    return Dataset(batch=batch, attribute_names=attr_names)


def save_csv(path, batch: Batch, attribute_names, labels=None) -> None:
    """Persist a batch in the load_csv format (id column, optional label column)."""
    attribute_names = list(attribute_names)
    labels = list(labels) if labels is not None else (
        list(batch.labels) if batch.labels is not None else None
    )
    if labels is not None and len(labels) != len(batch):
        raise ValueError(f"{len(labels)} labels for {len(batch)} records")
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        header = ["id"] + attribute_names + (["label"] if labels is not None else [])
        w.writerow(header)
        for i, r in enumerate(batch.records):
            row = [r.id] + [repr(v) for v in r.values]
            if labels is not None:
                row.append(labels[i].class_name)
            w.writerow(row)


@dataclass(frozen=True)
class NormStats:
    """Per-attribute (min, max) captured at fit time."""

    mins: tuple[float, ...]
    maxs: tuple[float, ...]

    def __post_init__(self):
        if len(self.mins) != len(self.maxs):
            raise ValueError("mins and maxs must align")
        for j, (lo, hi) in enumerate(zip(self.mins, self.maxs)):
            if lo > hi:
                raise ValueError(f"attribute {j}: min {lo} > max {hi}")


def fit_norm(batch: Batch) -> NormStats:
    X = batch.values_matrix()
    return NormStats(
        mins=tuple(float(v) for v in X.min(axis=0)),
        maxs=tuple(float(v) for v in X.max(axis=0)),
    )


def _norm_vector(values, stats: NormStats) -> tuple[np.ndarray, tuple[int, ...]]:
    v = np.asarray(values, dtype=float)
    mins = np.asarray(stats.mins)
    maxs = np.asarray(stats.maxs)
    span = maxs - mins
    with np.errstate(invalid="ignore"):
        out = np.where(span > 0, (v - mins) / np.where(span > 0, span, 1.0), 0.0)
    clamped = tuple(int(j) for j in np.nonzero((out < 0.0) | (out > 1.0))[0])
    return np.clip(out, 0.0, 1.0), clamped


def apply_norm(target, stats: NormStats):
    """Normalize a Record or Batch; returns (normalized, clamp report).

    The clamp report lists (record id, attribute index) pairs for values
    that fell outside the fitted range and were clamped to [0,1].
    """
    if isinstance(target, Record):
        if len(target.values) != len(stats.mins):
            raise ValueError(
                f"record {target.id!r} has {len(target.values)} attributes, "
                f"stats cover {len(stats.mins)}"
            )
        out, clamped = _norm_vector(target.values, stats)
        record = Record(
            id=target.id,
            values=tuple(float(v) for v in out),
            timestamp=target.timestamp,
            synthetic=target.synthetic,
        )
        return record, tuple((target.id, j) for j in clamped)
    if isinstance(target, Batch):
        records, clamps = [], []
        for r in target.records:
            rec, cl = apply_norm(r, stats)
            records.append(rec)
            clamps.extend(cl)
        return (
            Batch(records=tuple(records), labels=target.labels),
            tuple(clamps),
        )
    raise TypeError(f"apply_norm expects Record or Batch, got {type(target).__name__}")


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings for a desk-scale labeled fault stream.

    `informative` lists, per anomaly class, the attribute indices that
    shift and by how much: (class_index, indices, shifts). All other
    attributes are pure noise around 0.5.
    """

    d: int
    informative: tuple[tuple[int, tuple[int, ...], tuple[float, ...]], ...]
    anomaly_rate: float
    class_mix: tuple[float, ...]  # proportions over anomaly classes 1..C-1
    noise_sigma: float
    seed: int
    class_names: tuple[str, ...] = tuple(DEFAULT_CLASS_NAMES)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if not 0 <= self.anomaly_rate < 1:
            raise ValueError(f"anomaly_rate must be in [0,1), got {self.anomaly_rate}")
        if self.noise_sigma <= 0:
            raise ValueError(f"noise_sigma must be positive, got {self.noise_sigma}")
        if abs(sum(self.class_mix) - 1.0) > 1e-9:
            raise ValueError(f"class_mix must sum to 1, got {sum(self.class_mix)}")
        if len(self.class_mix) != len(self.class_names) - 1:
            raise ValueError(
                f"class_mix covers {len(self.class_mix)} anomaly classes, "
                f"names imply {len(self.class_names) - 1}"
            )
        for class_index, idxs, shifts in self.informative:
            if not 1 <= class_index < len(self.class_names):
                raise ValueError(f"informative class {class_index} is not an anomaly class")
            if len(idxs) != len(shifts):
                raise ValueError("informative indices and shifts must align")
            if any(j >= self.d or j < 0 for j in idxs):
                raise ValueError(f"informative index out of range for d={self.d}")

    @property
    def C(self) -> int:
        return len(self.class_names)


def synth_attribute_names(d: int) -> tuple[str, ...]:
    return tuple(f"attr{j}" for j in range(d))


@dataclass(frozen=True)
class LabeledEpoch:
    """One epoch's batch with its truth held out-of-band.

    The batch itself is unlabeled: truth is visible only to replay-mode
    metrics and the oracle labeler, never to the detector.
    """

    batch: Batch
    truth: tuple[ClassLabel, ...]

    def __post_init__(self):
        if len(self.truth) != len(self.batch):
            raise ValueError(f"{len(self.truth)} truth labels for {len(self.batch)} records")


def synth_stream(cfg: SynthConfig, epochs: int, epoch_size: int) -> list[LabeledEpoch]:
    """Draw `epochs` batches of clamped Gaussian records around 0.5.

    Anomalous records additionally shift their class's informative
    attributes. Byte-identical regeneration for a fixed seed.
    """
    if epochs < 1 or epoch_size < 1:
        raise ValueError("epochs and epoch_size must be >= 1")
    rng = np.random.default_rng(cfg.seed)
    shifts_by_class = {c: (np.array(i), np.array(s)) for c, i, s in cfg.informative}
    mix = np.array(cfg.class_mix, dtype=float)
    out = []
    counter = 0
    for e in range(epochs):
        records, truth = [], []
        for _ in range(epoch_size):
            values = 0.5 + cfg.noise_sigma * rng.standard_normal(cfg.d)
            if rng.random() < cfg.anomaly_rate:
                class_index = 1 + int(rng.choice(len(mix), p=mix))
                if class_index in shifts_by_class:
                    idxs, shifts = shifts_by_class[class_index]
                    values[idxs] += shifts
            else:
                class_index = 0
            values = np.clip(values, 0.0, 1.0)
            records.append(
                Record(id=f"r{counter:06d}", values=tuple(float(v) for v in values))
            )
            truth.append(ClassLabel(class_index, cfg.class_names[class_index]))
            counter += 1
        out.append(LabeledEpoch(batch=Batch(records=tuple(records)), truth=tuple(truth)))
    return out


def epochs_from_dataset(ds: Dataset, epoch_size: int) -> list[LabeledEpoch]:
    """Split a labeled dataset into replay epochs, truth held out-of-band."""
    if ds.batch.labels is None:
        raise ValueError("replay requires a labeled dataset")
    out = []
    records, labels = ds.batch.records, ds.batch.labels
    for start in range(0, len(records), epoch_size):
        chunk = records[start : start + epoch_size]
        truth = labels[start : start + epoch_size]
        out.append(LabeledEpoch(batch=Batch(records=chunk), truth=truth))
    return out
