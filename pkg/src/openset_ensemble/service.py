"""FastAPI service wrapping the experiment lab.

The CLI talks to these endpoints (in-process by default); a long-lived
deployment can serve multiple clients running sweeps against shared
storage.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .data import SyntheticSpec, generate_synthetic, save_csv
from .experiments import ExperimentResult, ExperimentSpec, run_experiment

app = FastAPI(title="openset-ensemble", version="0.1.0")


class GenerateDatasetRequest(BaseModel):
    spec: SyntheticSpec
    out_path: str


class GenerateDatasetResponse(BaseModel):
    out_path: str
    n_source: int
    n_target: int
    input_dim: int


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.post("/experiments/run", response_model=ExperimentResult)
def experiments_run(spec: ExperimentSpec) -> ExperimentResult:
    try:
        return run_experiment(spec)
    except (OSError, ValueError) as e:
        raise HTTPException(status_code=400, detail=str(e))


@app.post("/datasets/generate", response_model=GenerateDatasetResponse)
def datasets_generate(req: GenerateDatasetRequest) -> GenerateDatasetResponse:
    dataset = generate_synthetic(req.spec)
    try:
        save_csv(dataset, req.out_path)
    except OSError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return GenerateDatasetResponse(
        out_path=req.out_path,
        n_source=len(dataset.source_x),
        n_target=len(dataset.target_x),
        input_dim=dataset.input_dim,
    )
