"""Least-squares detectors with L1 / row-L21 sparsity penalties.

Three models share one solver:

* binary (``l1ls``): squared residual ||Y - Xw||^2 plus lambda * ||w||_1,
  labels +1 (normal) / -1 (anomaly), prediction by which of +1/-1 the
  score x.w is closer to;
* multi-class elementwise (``mcl1ls``): same penalty applied entrywise
  to a weight matrix, one column per class, prediction by argmax of x.W;
* multi-class row-sparse (``mcl21ls``): the penalty is the sum of row
  L2 norms, which zeroes whole attribute rows and is what makes the
  weight matrix usable for attribute ranking.

The bias is absorbed by appending a ones column, so weight vectors have
length d+1 (matrix: d+1 rows); the last entry/row is the bias and is
excluded from rankings.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import BinaryLabel, ClassLabel, Record
from .solver import SIGN_EPS, FitResult, LrSchedule, StopRule, sgd_fit, sign_eps

PENALTY_L1 = "l1"
PENALTY_L21 = "l21"

SNAPSHOT_FORMAT = "evodetect-weights v1"


def append_ones(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _check_shapes(X, Y, w):
    if X.shape[0] != Y.shape[0] or X.shape[1] != w.shape[0]:
        raise ValueError(
            f"shape mismatch: X {X.shape}, Y {Y.shape}, weights {w.shape}"
        )
    if Y.ndim == 2 and w.ndim == 2 and Y.shape[1] != w.shape[1]:
        raise ValueError(
            f"shape mismatch: Y {Y.shape} vs weights {w.shape} on class axis"
        )


def l1ls_objective(X, Y, w, lam) -> float:
    """||Y - Xw||_2^2 + lam * ||w||_1."""
    X, Y, w = np.asarray(X, float), np.asarray(Y, float), np.asarray(w, float)
    _check_shapes(X, Y, w)
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    r = Y - X @ w
    return float(r @ r + lam * np.sum(np.abs(w)))


def l1ls_gradient(X, Y, w, lam) -> np.ndarray:
    """-2 X'(Y - Xw) + lam * sign(w), sign zero-shifted by 1e-7."""
    X, Y, w = np.asarray(X, float), np.asarray(Y, float), np.asarray(w, float)
    _check_shapes(X, Y, w)
    return -2.0 * X.T @ (Y - X @ w) + lam * sign_eps(w)


def mcl1ls_objective(X, Y, W, lam) -> float:
    """Squared Frobenius residual + lam * sum of |W| entries."""
    X, Y, W = np.asarray(X, float), np.asarray(Y, float), np.asarray(W, float)
    _check_shapes(X, Y, W)
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    r = Y - X @ W
    return float(np.sum(r * r) + lam * np.sum(np.abs(W)))


def mcl1ls_gradient(X, Y, W, lam) -> np.ndarray:
    X, Y, W = np.asarray(X, float), np.asarray(Y, float), np.asarray(W, float)
    _check_shapes(X, Y, W)
    return -2.0 * X.T @ (Y - X @ W) + lam * sign_eps(W)


def l21_norm(W) -> float:
    """Sum over rows of the row's Euclidean norm."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.size == 0:
        raise ValueError("l21_norm of an empty matrix")
    return float(np.sum(np.sqrt(np.sum(W * W, axis=1))))


def sigma_rows(W, eps: float = SIGN_EPS) -> np.ndarray:
    """Inverse row norms 1 / max(||row||, eps) — the diagonal of the L21 subgradient."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    W = np.atleast_2d(np.asarray(W, dtype=float))
    norms = np.sqrt(np.sum(W * W, axis=1))
    return 1.0 / np.maximum(norms, eps)


def mcl21ls_objective(X, Y, W, lam) -> float:
    """Squared Frobenius residual + lam * L21 norm of W."""
    X, Y, W = np.asarray(X, float), np.asarray(Y, float), np.asarray(W, float)
    _check_shapes(X, Y, W)
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    r = Y - X @ W
    return float(np.sum(r * r) + lam * l21_norm(W))


def mcl21ls_gradient(X, Y, W, lam, eps: float = SIGN_EPS) -> np.ndarray:
    X, Y, W = np.asarray(X, float), np.asarray(Y, float), np.asarray(W, float)
    _check_shapes(X, Y, W)
    return -2.0 * X.T @ (Y - X @ W) + lam * sigma_rows(W, eps)[:, None] * W


@dataclass(frozen=True)
class BinaryDetector:
    """Normal-vs-anomaly detector; w has length d+1 (last entry = bias)."""

    w: np.ndarray
    lam: float
    schedule: LrSchedule
    stop: StopRule

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1 or not np.all(np.isfinite(w)):
            raise ValueError("binary detector weights must be a finite vector")
        object.__setattr__(self, "w", w)

    @property
    def d(self) -> int:
        return self.w.shape[0] - 1

    @property
    def kind(self) -> str:
        return "l1ls"


@dataclass(frozen=True)
class MulticlassDetector:
    """C-class detector; W is (d+1) x C, penalty either elementwise L1 or row L21."""

    W: np.ndarray
    lam: float
    penalty: str
    schedule: LrSchedule
    stop: StopRule
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        if W.ndim != 2 or W.shape[1] < 2 or not np.all(np.isfinite(W)):
            raise ValueError("multiclass weights must be a finite (d+1) x C matrix, C >= 2")
        if self.penalty not in (PENALTY_L1, PENALTY_L21):
            raise ValueError(f"penalty must be {PENALTY_L1!r} or {PENALTY_L21!r}")
        if self.class_names is not None and len(self.class_names) != W.shape[1]:
            raise ValueError(
                f"{len(self.class_names)} class names for C={W.shape[1]}"
            )
        object.__setattr__(self, "W", W)

    @property
    def d(self) -> int:
        return self.W.shape[0] - 1

    @property
    def C(self) -> int:
        return self.W.shape[1]

    @property
    def kind(self) -> str:
        return "mcl1ls" if self.penalty == PENALTY_L1 else "mcl21ls"

    def name_of(self, class_index: int) -> str:
        if self.class_names is not None:
            return self.class_names[class_index]
        return f"class{class_index}"


Detector = BinaryDetector | MulticlassDetector


def biased_init(d: int, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian init shifted by alpha so an untrained detector leans normal."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    return rng.standard_normal(d + 1) + alpha


def biased_init_multiclass(
    d: int, C: int, alpha: float, rng: np.random.Generator
) -> np.ndarray:
    """Gaussian init with +alpha on the normal column, -alpha on anomaly columns."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    W = rng.standard_normal((d + 1, C))
    W[:, 0] += alpha
    W[:, 1:] -= alpha
    return W


def calibrate_alpha(
    gauss: np.ndarray,
    alpha_max: float,
    X: np.ndarray,
    min_flag_rate: float = 0.1,
    iters: int = 60,
) -> float:
    """Largest alpha <= alpha_max whose initial flag rate >= min_flag_rate.

    `gauss` is the fixed standard-normal draw behind a biased init (vector
    of length d+1, or (d+1) x C matrix) and X is the first batch's n x d
    values. The normal-vs-anomaly margin of every record grows strictly
    with alpha, so the flag rate is monotone non-increasing and bisection
    pins the ignition point. This realizes "selectively initialize":
    too large an alpha would flag nothing and starve the loop of labels,
    while alpha_max is honored whenever it already flags enough.
    """
    if alpha_max < 0:
        raise ValueError(f"alpha_max must be >= 0, got {alpha_max}")
    if not 0 < min_flag_rate < 1:
        raise ValueError(f"min_flag_rate must be in (0,1), got {min_flag_rate}")
    Xp = append_ones(X)
    gauss = np.asarray(gauss, dtype=float)

    if gauss.ndim == 1:
        def flag_rate(alpha: float) -> float:
            scores = Xp @ (gauss + alpha)
            return float(np.mean(scores <= 0))
    else:
        bias_pattern = -np.ones(gauss.shape[1])
        bias_pattern[0] = 1.0

        def flag_rate(alpha: float) -> float:
            scores = Xp @ (gauss + alpha * bias_pattern)
            # >= mirrors the tie rule: equal scores route to the anomaly class
            return float(np.mean(scores[:, 1:].max(axis=1) >= scores[:, 0]))

    if flag_rate(alpha_max) >= min_flag_rate:
        return alpha_max
    lo, hi = 0.0, alpha_max  # flag_rate(0) is the unbiased argmax rate, ample
    for _ in range(iters):
        mid = (lo + hi) / 2.0
        if flag_rate(mid) >= min_flag_rate:
            lo = mid
        else:
            hi = mid
    return lo


def _record_vector(x, d: int) -> np.ndarray:
    vals = np.asarray(x.values if isinstance(x, Record) else x, dtype=float)
    if vals.shape != (d,):
        raise ValueError(f"record has {vals.shape[0]} attributes, detector expects {d}")
    return np.append(vals, 1.0)


def predict_binary(x, detector: BinaryDetector) -> tuple[BinaryLabel, float]:
    """Score x.w and pick whichever of +1/-1 is closer; an exact 0 flags anomaly."""
    score = float(_record_vector(x, detector.d) @ detector.w)
    return BinaryLabel(+1 if score > 0 else -1), score


def predict_binary_batch(X, detector: BinaryDetector) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized scores and +1/-1 labels for an n x d value matrix."""
    scores = append_ones(X) @ detector.w
    labels = np.where(scores > 0, 1, -1)
    return labels, scores


def predict_multiclass(x, detector: MulticlassDetector) -> tuple[ClassLabel, np.ndarray]:
    """Argmax of x.W; ties go to the largest class index (anomaly over normal)."""
    scores = _record_vector(x, detector.d) @ detector.W
    idx = _argmax_last(scores)
    return ClassLabel(idx, detector.name_of(idx)), scores


def predict_multiclass_batch(
    X, detector: MulticlassDetector
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized class indices and n x C score matrix."""
    scores = append_ones(X) @ detector.W
    rev = scores[:, ::-1]
    idx = scores.shape[1] - 1 - np.argmax(rev, axis=1)
    return idx, scores


def _argmax_last(scores: np.ndarray) -> int:
    return int(len(scores) - 1 - np.argmax(scores[::-1]))


def _objective_for(detector: Detector, Xp: np.ndarray, Y: np.ndarray):
    lam = detector.lam
    if isinstance(detector, BinaryDetector):
        return lambda w: (l1ls_objective(Xp, Y, w, lam), l1ls_gradient(Xp, Y, w, lam))
    if detector.penalty == PENALTY_L1:
        return lambda W: (mcl1ls_objective(Xp, Y, W, lam), mcl1ls_gradient(Xp, Y, W, lam))
    return lambda W: (mcl21ls_objective(Xp, Y, W, lam), mcl21ls_gradient(Xp, Y, W, lam))


def fit_incremental(detector: Detector, X_batch, Y_batch) -> Detector:
    """Warm-start fit on one batch; schedule state persists into the result.

    X_batch is n x d raw values (ones appended here); Y_batch is the
    encoded +1/-1 vector (binary) or n x C matrix (multiclass).
    """
    X_batch = np.asarray(X_batch, dtype=float)
    Y_batch = np.asarray(Y_batch, dtype=float)
    if X_batch.shape[0] == 0:
        raise ValueError("cannot fit on an empty batch")
    Xp = append_ones(X_batch)
    w0 = detector.w if isinstance(detector, BinaryDetector) else detector.W
    result: FitResult = sgd_fit(
        _objective_for(detector, Xp, Y_batch), w0, detector.schedule, detector.stop
    )
    if isinstance(detector, BinaryDetector):
        return replace(detector, w=result.weights, schedule=result.schedule)
    return replace(detector, W=result.weights, schedule=result.schedule)


def weights_to_text(detector: Detector) -> str:
    """Versioned text snapshot: header line, then one weight row per line."""
    if isinstance(detector, BinaryDetector):
        c, penalty, rows = 1, PENALTY_L1, detector.w[:, None]
    else:
        c, penalty, rows = detector.C, detector.penalty, detector.W
    header = (
        f"{SNAPSHOT_FORMAT} kind={detector.kind} d={detector.d} C={c} "
        f"lambda={detector.lam!r} penalty={penalty}"
    )
    lines = [header]
    for row in rows:
        lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def detector_from_text(
    text: str,
    schedule: LrSchedule | None = None,
    stop: StopRule | None = None,
    class_names: tuple[str, ...] | None = None,
) -> Detector:
    """Rebuild a detector from a snapshot produced by weights_to_text."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith(SNAPSHOT_FORMAT):
        raise ValueError("not a recognized weights snapshot")
    fields = dict(
        part.split("=", 1) for part in lines[0][len(SNAPSHOT_FORMAT):].split() if "=" in part
    )
    kind = fields["kind"]
    d, c, lam = int(fields["d"]), int(fields["C"]), float(fields["lambda"])
    rows = np.array([[float(v) for v in ln.split()] for ln in lines[1:]])
    if rows.shape != (d + 1, c):
        raise ValueError(f"snapshot body {rows.shape} does not match header (d+1={d+1}, C={c})")
    schedule = schedule or LrSchedule()
    stop = stop or StopRule()
    if kind == "l1ls":
        return BinaryDetector(w=rows[:, 0], lam=lam, schedule=schedule, stop=stop)
    penalty = PENALTY_L1 if kind == "mcl1ls" else PENALTY_L21
    return MulticlassDetector(
        W=rows, lam=lam, penalty=penalty, schedule=schedule, stop=stop,
        class_names=class_names,
    )
