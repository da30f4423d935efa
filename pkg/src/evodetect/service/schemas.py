"""Request and response bodies for the /v1 HTTP API."""

from __future__ import annotations

from pydantic import BaseModel, Field


class IngestRecord(BaseModel):
    id: str | None = None
    values: list[float]


class IngestRequest(BaseModel):
    records: list[IngestRecord] = Field(min_length=1)
    # optional echo of the schema; rejected when it disagrees
    attribute_names: list[str] | None = None


class IngestResponse(BaseModel):
    accepted: int
    buffered: int
    epochs_triggered: int


class QueueItem(BaseModel):
    record_id: str
    values: list[float]
    attribute_names: list[str]
    suggested_class: str
    scores: list[float]
    epoch_index: int
    status: str
    verdict_class: str | None = None
    verdict_time: float | None = None


class QueueResponse(BaseModel):
    items: list[QueueItem]
    total: int
    page: int
    page_size: int


class VerdictRequest(BaseModel):
    record_id: str
    class_name: str


class VerdictResponse(BaseModel):
    record_id: str
    status: str
    epoch_committed: bool


class MissedRequest(BaseModel):
    record_id: str
    class_name: str


class MissedResponse(BaseModel):
    record_id: str
    status: str


class MetricsResponse(BaseModel):
    reports: list[dict]
    total: int


class WeightsResponse(BaseModel):
    model: str
    lam: float
    epochs_run: int
    weights: str
    schedule: dict


class FeatureEntry(BaseModel):
    rank: int
    attribute: str
    weight: float


class FeaturesResponse(BaseModel):
    lam: float
    kind: str
    entries: list[FeatureEntry]


class OpenEpochStatus(BaseModel):
    epoch_index: int
    flagged: int
    verified: int
    pending: int


class StatusResponse(BaseModel):
    mode: str
    model: str
    class_names: list[str]
    attribute_names: list[str]
    epoch_size: int
    epochs_run: int
    records_seen: int
    verdicts_seen: int
    labeled_fraction_cumulative: float
    buffered: int
    open_epoch: OpenEpochStatus | None = None
    replay_exhausted: bool = False


class ErrorDetail(BaseModel):
    code: str
    message: str
