"""Subgradient-descent driver with a shrink-on-stall learning-rate schedule.

The driver takes full-batch subgradient steps. A step that increases the
objective is reverted and the learning rate is divided by the shrink
factor (floored); a step that does not increase it is accepted. The run
stops once the accepted decrease falls to the tolerance, so the sequence
of accepted objective values is non-increasing by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

SIGN_EPS = 1e-7


class SolverDiverged(RuntimeError):
    """Objective or gradient went non-finite during a fit."""


@dataclass(frozen=True)
class LrSchedule:
    current_lr: float = 0.1
    initial_lr: float = 0.1
    shrink_factor: float = 10.0
    floor: float = 1e-7

    def __post_init__(self):
        if not (0 < self.floor <= self.current_lr <= self.initial_lr):
            raise ValueError(
                f"need floor <= current_lr <= initial_lr, got "
                f"{self.floor} / {self.current_lr} / {self.initial_lr}"
            )
        if self.shrink_factor < 1.0:
            raise ValueError(f"shrink_factor must be >= 1, got {self.shrink_factor}")

    @classmethod
    def fixed(cls, lr: float) -> "LrSchedule":
        """Constant learning rate (shrinking disabled)."""
        return cls(current_lr=lr, initial_lr=lr, shrink_factor=1.0, floor=lr)


@dataclass(frozen=True)
class StopRule:
    tol: float = 1e-6
    max_iters: int = 10000

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


def sign_eps(v):
    """Zero-safe elementwise sign: +1 for v > 0, -1 for v < 0, +1 at exactly 0.

    The zero case is resolved by nudging the argument by 1e-7 before
    taking the sign, so sign_eps(0) == sign(1e-7) == +1.
    """
    arr = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("sign_eps requires finite input")
    out = np.where(arr + SIGN_EPS > 0, 1.0, -1.0)
    if np.isscalar(v) or np.ndim(v) == 0:
        return float(out)
    return out


def lr_step(schedule: LrSchedule, objective_decreased: bool) -> LrSchedule:
    """Shrink the rate when the objective failed to decrease; never grow it."""
    if objective_decreased:
        return schedule
    new_lr = max(schedule.current_lr / schedule.shrink_factor, schedule.floor)
    return replace(schedule, current_lr=new_lr)


@dataclass(frozen=True)
class FitResult:
    weights: np.ndarray
    objective: float
    iterations: int
    schedule: LrSchedule


def sgd_fit(
    objective: Callable[[np.ndarray], tuple[float, np.ndarray]],
    w0: np.ndarray,
    schedule: LrSchedule,
    stop: StopRule,
) -> FitResult:
    """Minimize `objective` (a value-and-gradient callable) from w0.

    Each iteration proposes w - lr * grad. If the proposal does not
    increase the objective it is accepted, and the run terminates when
    the accepted decrease is <= stop.tol. Otherwise the step is reverted
    and the learning rate shrinks. Deterministic given its arguments.
    """
    w = np.array(w0, dtype=float)
    f, grad = objective(w)
    if not np.isfinite(f):
        raise SolverDiverged(f"objective non-finite at start (lr={schedule.current_lr})")

    iters = 0
    while iters < stop.max_iters:
        if not np.all(np.isfinite(grad)):
            raise SolverDiverged(
                f"gradient non-finite at iteration {iters} (lr={schedule.current_lr})"
            )
        iters += 1
        w_try = w - schedule.current_lr * grad
        f_try, grad_try = objective(w_try)
        if not np.isfinite(f_try):
            raise SolverDiverged(
                f"objective non-finite at iteration {iters} (lr={schedule.current_lr})"
            )
        if f_try <= f:
            decrease = f - f_try
            w, f, grad = w_try, f_try, grad_try
            if decrease <= stop.tol:
                break
        else:
            shrunk = lr_step(schedule, objective_decreased=False)
            if shrunk.current_lr == schedule.current_lr:
                # Rate can't shrink further, so the identical step would be
                # proposed and rejected until max_iters: a fixed point.
                break
            schedule = shrunk

    return FitResult(weights=w, objective=f, iterations=iters, schedule=schedule)
