"""Service configuration: one JSON file drives the whole process."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from ..model import DEFAULT_CLASS_NAMES
from ..runner import MODEL_KINDS

SERVICE_MODES = ("live", "replay")


@dataclass(frozen=True)
class ServiceConfig:
    """Everything the long-running process needs, in one place.

    `mode` selects the data path: "live" accepts records over POST
    /v1/ingest against the configured attribute schema; "replay" feeds
    itself epoch by epoch from a labeled CSV, either pausing for human
    verdicts (replay_oracle off) or answering them from the file's own
    labels (replay_oracle on).
    """

    mode: str = "live"
    model: str = "mcl21ls"
    lam: float = 0.01
    alpha: float = 0.5
    seed: int = 0
    epoch_size: int = 300
    class_names: tuple[str, ...] = tuple(DEFAULT_CLASS_NAMES)
    attribute_names: tuple[str, ...] | None = None  # required in live mode
    smote: bool = True
    smote_k: int = 5
    smote_ratio: float = 1.0
    biased_init: bool = True
    margin_tau: float = 0.0
    bootstrap_fraction: float = 0.1
    tol: float = 1e-6
    max_iters: int = 10000
    input_csv: str | None = None  # replay mode's data source
    replay_oracle: bool = False
    # with a timeout set, an epoch fits on the verdicts received so far
    # once the deadline lapses; None waits for every verdict
    verification_timeout_s: float | None = None
    event_log: str = "events.jsonl"
    port: int = 8000

    def __post_init__(self):
        if self.mode not in SERVICE_MODES:
            raise ValueError(f"mode must be one of {SERVICE_MODES}, got {self.mode!r}")
        if self.model not in MODEL_KINDS:
            raise ValueError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if self.epoch_size < 1:
            raise ValueError(f"epoch_size must be >= 1, got {self.epoch_size}")
        if self.mode == "replay" and self.input_csv is None:
            raise ValueError("replay mode requires input_csv")
        if self.mode == "live" and not self.attribute_names:
            raise ValueError("live mode requires attribute_names (the ingest schema)")
        if len(self.class_names) < 2:
            raise ValueError("at least two classes (normal + one anomaly) are required")
        if self.class_names[0] != "normal":
            raise ValueError("the first class must be 'normal'")
        if self.verification_timeout_s is not None and self.verification_timeout_s <= 0:
            raise ValueError("verification_timeout_s must be positive when set")


def service_config_to_dict(cfg: ServiceConfig) -> dict:
    return asdict(cfg)


def service_config_from_dict(d: dict) -> ServiceConfig:
    d = dict(d)
    for key in ("class_names", "attribute_names"):
        if d.get(key) is not None:
            d[key] = tuple(d[key])
    return ServiceConfig(**d)


def load_service_config(path) -> ServiceConfig:
    with Path(path).open() as fh:
        return service_config_from_dict(json.load(fh))
