"""Attribute-importance ranking from fitted weights, and the lambda sweep.

Binary importance is |w_j|; multi-class importance is the L2 norm of
attribute j's row of the weight matrix. The appended bias column never
appears in a ranking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detectors import (
    PENALTY_L1,
    PENALTY_L21,
    BinaryDetector,
    MulticlassDetector,
    fit_incremental,
)
from .model import Batch, encode_binary, encode_multiclass
from .solver import LrSchedule, StopRule

DEFAULT_LAMBDAS = (0.01, 0.1, 1.0, 10.0)


@dataclass(frozen=True)
class AttributeRanking:
    entries: tuple[tuple[str, float], ...]  # (attribute name, importance), descending
    lam: float
    kind: str

    def __post_init__(self):
        imps = [imp for _, imp in self.entries]
        if any(imp < 0 for imp in imps):
            raise ValueError("importances must be nonnegative")
        if any(a < b for a, b in zip(imps, imps[1:])):
            raise ValueError("importances must be non-increasing")

    def top(self, k: int) -> tuple[tuple[str, float], ...]:
        return self.entries[:k]


def _rank(importance: np.ndarray, names, lam: float, kind: str) -> AttributeRanking:
    names = list(names)
    if len(names) != importance.shape[0]:
        raise ValueError(
            f"{len(names)} names for {importance.shape[0]} weight entries"
        )
    # argsort of the negated values; stable sort keeps ties in index order
    order = np.argsort(-importance, kind="stable")
    entries = tuple((names[j], float(importance[j])) for j in order)
    return AttributeRanking(entries=entries, lam=lam, kind=kind)


def rank_binary(w, names, lam: float = 0.0) -> AttributeRanking:
    """Rank attributes by |w_j|, bias (last entry) excluded."""
    w = np.asarray(w, dtype=float)
    return _rank(np.abs(w[:-1]), names, lam, "l1ls")


def rank_multiclass(W, names, lam: float = 0.0, kind: str = "mcl21ls") -> AttributeRanking:
    """Rank attributes by the L2 norm of their weight-matrix row, bias excluded."""
    W = np.asarray(W, dtype=float)
    rows = W[:-1]
    return _rank(np.sqrt(np.sum(rows * rows, axis=1)), names, lam, kind)


def rank_detector(detector, names) -> AttributeRanking:
    if isinstance(detector, BinaryDetector):
        return rank_binary(detector.w, names, lam=detector.lam)
    return rank_multiclass(detector.W, names, lam=detector.lam, kind=detector.kind)


@dataclass(frozen=True)
class SweepCell:
    lam: float
    ranking: AttributeRanking | None
    error: str | None = None


@dataclass(frozen=True)
class SweepTable:
    cells: tuple[SweepCell, ...]
    top_k: int


def lambda_sweep(
    data: Batch,
    names,
    lambdas=DEFAULT_LAMBDAS,
    top_k: int = 10,
    kind: str = "mcl21ls",
    seed: int = 0,
    stop: StopRule | None = None,
    C: int | None = None,
) -> SweepTable:
    """Fit one detector per lambda from a shared start and rank attributes.

    Every cell warm-starts from the all-zero weights (the lasso homotopy
    origin), so the cells differ only in lambda and the sweep is
    deterministic for a given batch. Cells that fail to fit report their
    error; the rest still complete.
    """
    lambdas = tuple(float(l) for l in lambdas)
    if not lambdas:
        raise ValueError("lambdas must be nonempty")
    if data.labels is None:
        raise ValueError("lambda sweep requires a labeled batch")
    names = list(names)
    X = data.values_matrix()
    d = X.shape[1]
    if len(names) != d:
        raise ValueError(f"{len(names)} names for {d} attributes")
    stop = stop or StopRule()
    if C is None:
        C = max(2, max(lb.class_index for lb in data.labels) + 1)

    cells = []
    for lam in lambdas:
        try:
            if kind == "l1ls":
                det = BinaryDetector(
                    w=np.zeros(d + 1), lam=lam,
                    schedule=LrSchedule(), stop=stop,
                )
                fitted = fit_incremental(det, X, encode_binary(data.labels))
            else:
                penalty = PENALTY_L1 if kind == "mcl1ls" else PENALTY_L21
                det = MulticlassDetector(
                    W=np.zeros((d + 1, C)), lam=lam,
                    penalty=penalty, schedule=LrSchedule(), stop=stop,
                )
                fitted = fit_incremental(det, X, encode_multiclass(data.labels, C))
            full = rank_detector(fitted, names)
            ranking = AttributeRanking(
                entries=full.entries[:top_k], lam=lam, kind=full.kind
            )
            cells.append(SweepCell(lam=lam, ranking=ranking))
        except Exception as exc:  # noqa: BLE001 - cell errors must not kill the sweep
            cells.append(SweepCell(lam=lam, ranking=None, error=str(exc)))
    return SweepTable(cells=tuple(cells), top_k=top_k)


def ranking_to_csv(ranking: AttributeRanking) -> str:
    """CSV export: rank, attribute, weight."""
    lines = ["rank,attribute,weight"]
    for i, (name, imp) in enumerate(ranking.entries, start=1):
        lines.append(f"{i},{name},{imp!r}")
    return "\n".join(lines) + "\n"
