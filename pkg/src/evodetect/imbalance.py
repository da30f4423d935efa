"""SMOTE oversampling to rebalance rare anomaly classes before fitting.

Synthetic points are convex combinations of a class member and one of
its k nearest same-class neighbors, so every output lies inside the
class's axis-aligned bounding box. Synthetic records are marked and are
only ever used for fitting, never for metrics or labeling statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import NORMAL_CLASS_INDEX, Batch, ClassLabel, Record


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    amount_ratio: float = 1.0  # generated count = floor(ratio * class size)
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if self.amount_ratio <= 0:
            raise ValueError(f"amount_ratio must be positive, got {self.amount_ratio}")


def smote_class(
    records: list[Record], cfg: SmoteConfig, rng: np.random.Generator | None = None
) -> list[Record]:
    """Generate floor(amount_ratio * n) synthetic records for one class.

    Seeds cycle round-robin through the originals (so ratio 1.0 uses each
    record exactly once); the partner is drawn uniformly from the seed's
    k nearest Euclidean neighbors within the class, with effective
    k = min(k_neighbors, n - 1); the interpolation weight g is uniform on
    [0,1]; values are clamped to [0,1] afterwards.
    """
    records = list(records)
    n = len(records)
    if n < 2:
        raise ValueError(f"SMOTE needs at least 2 records in a class, got {n}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    X = np.array([r.values for r in records], dtype=float)
    # n x n pairwise squared distances; self-distance pushed to infinity
    diffs = X[:, None, :] - X[None, :, :]
    dist2 = np.sum(diffs * diffs, axis=2)
    np.fill_diagonal(dist2, np.inf)
    k_eff = min(cfg.k_neighbors, n - 1)
    neighbor_idx = np.argsort(dist2, axis=1, kind="stable")[:, :k_eff]

    m = int(np.floor(cfg.amount_ratio * n))
    out = []
    for i in range(m):
        s = i % n
        partner = int(neighbor_idx[s, rng.integers(k_eff)])
        g = rng.uniform(0.0, 1.0)
        point = X[s] + g * (X[partner] - X[s])
        point = np.clip(point, 0.0, 1.0)
        out.append(
            Record(
                id=f"{records[s].id}+syn{i}",
                values=tuple(float(v) for v in point),
                timestamp=records[s].timestamp,
                synthetic=True,
            )
        )
    return out


@dataclass(frozen=True)
class RebalanceResult:
    batch: Batch
    warnings: tuple[str, ...]


def rebalance_epoch(
    batch: Batch, cfg: SmoteConfig, epoch_index: int = 0
) -> RebalanceResult:
    """Oversample every anomaly class with >= 2 members; originals untouched.

    Classes too small to interpolate pass through with a warning for the
    epoch report. Synthetic records carry their source class label and
    the synthetic flag. Deterministic in (cfg.seed, epoch_index).
    """
    if batch.labels is None:
        raise ValueError("rebalance requires a labeled batch")
    by_class: dict[int, list[int]] = {}
    for i, lb in enumerate(batch.labels):
        if lb.class_index != NORMAL_CLASS_INDEX:
            by_class.setdefault(lb.class_index, []).append(i)

    records = list(batch.records)
    labels = list(batch.labels)
    warnings = []
    for class_index in sorted(by_class):
        members = by_class[class_index]
        label = labels[members[0]]
        if len(members) < 2:
            warnings.append(
                f"class {label.class_name!r} has {len(members)} record(s), "
                "too few for SMOTE; passed through unaugmented"
            )
            continue
        rng = np.random.default_rng([cfg.seed, epoch_index, class_index])
        synth = smote_class([records[i] for i in members], cfg, rng=rng)
        records.extend(synth)
        labels.extend([label] * len(synth))
    return RebalanceResult(
        batch=Batch(records=tuple(records), labels=tuple(labels)),
        warnings=tuple(warnings),
    )
