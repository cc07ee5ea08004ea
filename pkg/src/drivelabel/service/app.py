"""HTTP surface of the labeling engine."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import ConfigError, DrivelabelError
from . import jobs
from .models import (
    EvalRequest,
    EvalResponse,
    HealthResponse,
    LabelRequest,
    LabelResponse,
    OverlayRequest,
    OverlayResponse,
    PredictRequest,
    PredictResponse,
    SynthRequest,
    SynthResponse,
    TrainRequest,
    TrainResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(title="drivelabel", version=__version__)

    @app.exception_handler(DrivelabelError)
    async def pipeline_error(request: Request, exc: DrivelabelError):
        status = 400 if isinstance(exc, ConfigError) else 422
        return JSONResponse(
            status_code=status,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.get("/v1/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/v1/label", response_model=LabelResponse)
    def label(req: LabelRequest):
        return jobs.run_label(req)

    @app.post("/v1/eval", response_model=EvalResponse)
    def evaluate(req: EvalRequest):
        return jobs.run_eval(req)

    @app.post("/v1/train-head", response_model=TrainResponse)
    def train(req: TrainRequest):
        return jobs.run_train(req)

    @app.post("/v1/predict", response_model=PredictResponse)
    def predict(req: PredictRequest):
        return jobs.run_predict(req)

    @app.post("/v1/synth", response_model=SynthResponse)
    def synth(req: SynthRequest):
        return jobs.run_synth(req)

    @app.post("/v1/overlay", response_model=OverlayResponse)
    def overlay(req: OverlayRequest):
        return jobs.run_overlay(req)

    return app


app = create_app()
