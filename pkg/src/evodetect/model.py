"""Shared domain types and label encodings.

Classes are indexed 0..C-1 with index 0 reserved for "normal"; indices
1..C-1 are the anomaly types. Labels are encoded as +1/-1 (never 0/1):
+1 marks the true class in the multi-class one-hot rows, and in the
binary setting +1 means normal, -1 means anomaly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NORMAL_CLASS_INDEX = 0

DEFAULT_CLASS_NAMES = ["normal", "memory", "cpu", "network", "disk"]


@dataclass(frozen=True)
class Record:
    """One telemetry observation: a d-vector of attribute values plus metadata."""

    id: str
    values: tuple[float, ...]
    timestamp: int | None = None  # epoch milliseconds
    synthetic: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError(f"record {self.id!r}: values must be a non-empty vector")
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"record {self.id!r}: non-finite attribute value")
        object.__setattr__(self, "values", tuple(float(v) for v in vals))

    @property
    def d(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ClassLabel:
    class_index: int
    class_name: str

    def __post_init__(self):
        if self.class_index < 0:
            raise ValueError(f"class_index must be >= 0, got {self.class_index}")

    @property
    def is_normal(self) -> bool:
        return self.class_index == NORMAL_CLASS_INDEX


@dataclass(frozen=True)
class BinaryLabel:
    """+1 = normal, -1 = anomaly."""

    value: int

    def __post_init__(self):
        if self.value not in (+1, -1):
            raise ValueError(f"binary label must be +1 or -1, got {self.value}")

    @property
    def is_normal(self) -> bool:
        return self.value == +1


def make_labels(class_indices, class_names: list[str]) -> list[ClassLabel]:
    """Build ClassLabels from integer indices against a configured name list."""
    out = []
    for idx in class_indices:
        idx = int(idx)
        if idx >= len(class_names):
            raise ValueError(f"class index {idx} out of range for {len(class_names)} classes")
        out.append(ClassLabel(idx, class_names[idx]))
    return out


@dataclass(frozen=True)
class Batch:
    """A batch of n records, optionally labeled (aligned by index)."""

    records: tuple[Record, ...]
    labels: tuple[ClassLabel, ...] | None = None

    def __post_init__(self):
        if not self.records:
            raise ValueError("batch must contain at least one record")
        object.__setattr__(self, "records", tuple(self.records))
        d = self.records[0].d
        for r in self.records:
            if r.d != d:
                raise ValueError(
                    f"record {r.id!r} has {r.d} attributes, batch expects {d}"
                )
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))
            if len(self.labels) != len(self.records):
                raise ValueError(
                    f"{len(self.labels)} labels for {len(self.records)} records"
                )

    def __len__(self) -> int:
        return len(self.records)

    @property
    def d(self) -> int:
        return self.records[0].d

    def values_matrix(self) -> np.ndarray:
        """n x d matrix of raw attribute values."""
        return np.array([r.values for r in self.records], dtype=float)

    def require_normalized(self):
        x = self.values_matrix()
        if x.min() < 0.0 or x.max() > 1.0:
            bad = np.argwhere((x < 0.0) | (x > 1.0))[0]
            r = self.records[bad[0]]
            raise ValueError(
                f"record {r.id!r} attribute {bad[1]} = {r.values[bad[1]]} "
                "outside [0,1]; normalize before detection"
            )


def encode_binary(labels) -> np.ndarray:
    """Map class labels to a +1/-1 vector: +1 iff the class is normal."""
    labels = list(labels)
    if not labels:
        raise ValueError("cannot encode an empty label list")
    return np.array([+1.0 if lb.is_normal else -1.0 for lb in labels])


def encode_multiclass(labels, C: int) -> np.ndarray:
    """Map class labels to an n x C matrix: +1 at the true class, -1 elsewhere."""
    labels = list(labels)
    if not labels:
        raise ValueError("cannot encode an empty label list")
    if C < 2:
        raise ValueError(f"need at least 2 classes, got C={C}")
    out = -np.ones((len(labels), C))
    for i, lb in enumerate(labels):
        if lb.class_index >= C:
            raise ValueError(
                f"label {i}: class_index {lb.class_index} out of range for C={C}"
            )
        out[i, lb.class_index] = +1.0
    return out
