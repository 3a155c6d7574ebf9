"""JSON HTTP surface over MonitorService.

POST endpoints are idempotent under a client-supplied request token: replays
return the originally computed response (marked "replayed") without touching
state. Label submissions may carry the revision they were composed against;
a stale value is rejected with 409 so the operator refreshes first.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .errors import DataError, RequestError, WeldwatchError
from .data import SampleRecord
from .mlp import TrainConfig
from .service import LabelAssignment, MonitorService

import numpy as np


class DetectSampleBody(BaseModel):
    sample_id: str
    features: list[float]
    truth_label: str | None = None
    truth_unknown: bool = False


class DetectBody(BaseModel):
    samples: list[DetectSampleBody]
    request_token: str | None = None


class AssignmentBody(BaseModel):
    cluster_id: int
    label: str
    overrides: dict[str, str] = Field(default_factory=dict)


class LabelsBody(BaseModel):
    assignments: list[AssignmentBody]
    request_token: str
    expected_revision: int | None = None
    update: bool = True


class UpdateBody(BaseModel):
    request_token: str
    epochs: int | None = None
    learning_rate: float | None = None
    batch_size: int | None = None
    freeze_hidden: int | None = None


def create_app(service: MonitorService, static_dir=None) -> FastAPI:
    app = FastAPI(title="weldwatch monitor", version="0.1.0")

    def _http(exc: WeldwatchError) -> HTTPException:
        if isinstance(exc, RequestError):
            status = 409 if "stale" in str(exc) else 404 if "unknown" in str(exc) else 400
            return HTTPException(status_code=status, detail=str(exc))
        if isinstance(exc, DataError):
            return HTTPException(status_code=400, detail=str(exc))
        return HTTPException(status_code=400, detail=str(exc))

    @app.get("/state")
    def get_state() -> dict:
        return service.state_info()

    @app.get("/clusters")
    def get_clusters(refresh: bool = False) -> dict:
        try:
            return service.clusters_json(refresh=refresh)
        except WeldwatchError as exc:
            raise _http(exc) from exc

    @app.get("/samples/{sample_id}")
    def get_sample(sample_id: str) -> dict:
        try:
            return service.sample_json(sample_id)
        except WeldwatchError as exc:
            raise _http(exc) from exc

    @app.get("/metrics")
    def get_metrics() -> dict:
        return service.metrics_json()

    @app.post("/detect")
    def post_detect(body: DetectBody) -> dict:
        records = []
        for s in body.samples:
            # A truth name outside the label map marks the sample truly unknown;
            # an explicit truth_unknown uses a name no class can have.
            label = s.truth_label
            if s.truth_unknown and label is None:
                label = "__truly_unknown__"
            records.append(
                SampleRecord(s.sample_id, np.asarray(s.features, dtype=float), label)
            )
        try:
            return service.detect(records, token=body.request_token)
        except WeldwatchError as exc:
            raise _http(exc) from exc

    @app.post("/labels")
    def post_labels(body: LabelsBody) -> dict:
        assignments = [
            LabelAssignment(a.cluster_id, a.label, dict(a.overrides))
            for a in body.assignments
        ]
        try:
            return service.apply_labels(
                assignments,
                token=body.request_token,
                expected_revision=body.expected_revision,
                update=body.update,
            )
        except WeldwatchError as exc:
            raise _http(exc) from exc

    @app.post("/update")
    def post_update(body: UpdateBody) -> dict:
        base = service.state.update_cfg.train_cfg
        train_cfg = None
        if any(v is not None for v in (body.epochs, body.learning_rate, body.batch_size)):
            train_cfg = TrainConfig(
                learning_rate=body.learning_rate or base.learning_rate,
                epochs=body.epochs or base.epochs,
                batch_size=body.batch_size or base.batch_size,
                shuffle_seed=base.shuffle_seed,
            )
        try:
            return service.update(
                token=body.request_token,
                train_cfg=train_cfg,
                freeze_hidden=body.freeze_hidden,
            )
        except WeldwatchError as exc:
            raise _http(exc) from exc

    if static_dir is not None:
        from fastapi.responses import RedirectResponse
        from fastapi.staticfiles import StaticFiles

        @app.get("/", include_in_schema=False)
        def home() -> RedirectResponse:
            return RedirectResponse(url="/ui/")

        app.mount("/ui", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def serve(service: MonitorService, host: str = "127.0.0.1", port: int = 8300, static_dir=None) -> None:
    import uvicorn

    uvicorn.run(create_app(service, static_dir=static_dir), host=host, port=port, log_level="warning")
