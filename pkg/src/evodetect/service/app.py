"""FastAPI wiring over the event-sourced core; every route lives under /v1."""

from __future__ import annotations

from contextlib import asynccontextmanager

from fastapi import APIRouter, FastAPI, HTTPException, Query

from .. import __version__
from .config import ServiceConfig
from .core import ServiceCore, ServiceError
from .schemas import (
    FeaturesResponse,
    IngestRequest,
    IngestResponse,
    MetricsResponse,
    MissedRequest,
    MissedResponse,
    QueueResponse,
    StatusResponse,
    VerdictRequest,
    VerdictResponse,
    WeightsResponse,
)


def create_app(cfg: ServiceConfig, log_path=None) -> FastAPI:
    """Build the service around a core restored from (or starting) its log."""
    core = ServiceCore(cfg, log_path=log_path)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        core.close()

    app = FastAPI(title="evodetect", version=__version__, lifespan=lifespan)
    app.state.core = core
    v1 = APIRouter(prefix="/v1")

    def run(fn, *args):
        try:
            return fn(*args)
        except ServiceError as err:
            raise HTTPException(
                err.status, detail={"code": err.code, "message": err.message}
            ) from None

    @v1.post("/ingest", response_model=IngestResponse)
    def ingest(body: IngestRequest):
        records = [r.model_dump() for r in body.records]
        return run(core.ingest, records, body.attribute_names)

    @v1.get("/queue", response_model=QueueResponse)
    def queue(
        status: str | None = Query(default=None),
        page: int = Query(default=0, ge=0),
        page_size: int = Query(default=50, ge=1, le=500),
    ):
        return run(core.get_queue, status, page, page_size)

    @v1.post("/labels", response_model=VerdictResponse)
    def labels(body: VerdictRequest):
        return run(core.post_verdict, body.record_id, body.class_name)

    @v1.post("/missed", response_model=MissedResponse)
    def missed(body: MissedRequest):
        return run(core.post_missed, body.record_id, body.class_name)

    @v1.get("/metrics", response_model=MetricsResponse)
    def metrics(
        start: int = Query(default=0, ge=0),
        count: int | None = Query(default=None, ge=1),
    ):
        return run(core.get_metrics, start, count)

    @v1.get("/weights", response_model=WeightsResponse)
    def weights():
        return run(core.get_weights)

    @v1.get("/features", response_model=FeaturesResponse)
    def features(top_k: int = Query(default=10, ge=1)):
        return run(core.get_features, top_k)

    @v1.get("/status", response_model=StatusResponse)
    def status():
        return run(core.get_status)

    app.include_router(v1)
    return app
