"""HTTP bindings for the service operations."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from . import __version__, service
from .association import ExhaustiveBudgetError
from .mimo import InfeasibleActivationError
from .topology import ScenarioError

app = FastAPI(title="mmwave-assoc", version=__version__)


def _guarded(fn, request):
    try:
        return fn(request)
    except (ScenarioError, InfeasibleActivationError, ExhaustiveBudgetError,
            ValueError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/run", response_model=service.RunResponse)
def run(request: service.RunRequest) -> service.RunResponse:
    return _guarded(service.run, request)


@app.post("/compare", response_model=service.CompareResponse)
def compare(request: service.CompareRequest) -> service.CompareResponse:
    return _guarded(service.compare, request)


@app.post("/scale", response_model=service.ScaleResponse)
def scale(request: service.ScaleRequest) -> service.ScaleResponse:
    return _guarded(service.scale, request)


@app.post("/validate", response_model=service.ValidateResponse)
def validate(request: service.ValidateRequest) -> service.ValidateResponse:
    return service.validate(request)
