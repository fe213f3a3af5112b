"""HTTP service exposing the pipeline: synth, train, recommend, evaluate, verify.

Thin wrappers around burncf.pipeline; input and contract errors map to 400,
anything unexpected surfaces as 500.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__, pipeline
from ..data import InteractionFormatError
from .schemas import (ConfigSpec, EvaluateRequest, EvaluateResponse,
                      HealthResponse, RecommendRequest, RecommendResponse,
                      SynthRequest, SynthResponse, TrainRequest,
                      TrainResponse, VerifyRequest, VerifyResponse)

app = FastAPI(title="burncf", version=__version__)

_INPUT_ERRORS = (ValueError, KeyError, FileNotFoundError, InteractionFormatError)


def _run_config(spec: ConfigSpec) -> pipeline.RunConfig:
    return pipeline.config_from_dict(spec.model_dump())


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/synth", response_model=SynthResponse)
def synth(req: SynthRequest) -> SynthResponse:
    try:
        out = pipeline.run_synth(req.out_dir, req.n_users, req.n_items,
                                 req.n_blocks, req.holdout, req.seed)
    except _INPUT_ERRORS as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return SynthResponse(**out)


@app.post("/train", response_model=TrainResponse)
def train(req: TrainRequest) -> TrainResponse:
    try:
        out = pipeline.run_train(_run_config(req.config), req.train_path,
                                 req.out_dir)
    except _INPUT_ERRORS as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return TrainResponse(**out)


@app.post("/recommend", response_model=RecommendResponse)
def recommend(req: RecommendRequest) -> RecommendResponse:
    try:
        out = pipeline.run_recommend(_run_config(req.config),
                                     req.checkpoint_path, req.train_path,
                                     req.out_dir, cutoff=req.cutoff,
                                     mode_override=req.mode_override)
    except _INPUT_ERRORS as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return RecommendResponse(**out)


@app.post("/evaluate", response_model=EvaluateResponse)
def evaluate(req: EvaluateRequest) -> EvaluateResponse:
    try:
        out = pipeline.run_evaluate(req.recommendations_path, req.test_path,
                                    req.train_path, out_dir=req.out_dir,
                                    cutoffs=tuple(req.cutoffs),
                                    config_hash=req.config_hash)
    except _INPUT_ERRORS as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return EvaluateResponse(**out)


@app.post("/verify", response_model=VerifyResponse)
def verify(req: VerifyRequest) -> VerifyResponse:
    try:
        out = pipeline.run_verify(req.suites)
    except _INPUT_ERRORS as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return VerifyResponse(**out)
