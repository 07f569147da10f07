import json
from datetime import datetime
from typing import Any, Dict, List, Optional

from fastapi import APIRouter, Depends, HTTPException
from pydantic import BaseModel, ConfigDict, field_validator
from sqlalchemy.orm import Session

import config
from dependencies import get_db, to_http_error
from experiments import OrderPreservationSpec, SweepSpec, run_erm_sweep, run_order_preservation_experiment
from models import RunKind, RunStatus
from results_store import ResultStore

router = APIRouter(prefix="/experiments", tags=["experiments"])

class AffinitySummaryResponse(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    objective: str
    gamma: float
    draws: int
    slope: float
    intercept: float
    r_squared: float
    spearman_rho: Optional[float] = None
    predicted_slope: float
    predicted_intercept: Optional[float] = None
    slope_se: Optional[float] = None
    intercept_se: Optional[float] = None
    low_confidence: bool

class SweepRowResponse(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    gamma: float
    loss: str
    seed: int
    metric: str
    value: Optional[float] = None
    status: str
    error: Optional[str] = None
    source: str = ""

class RunResponse(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    id: int
    kind: RunKind
    status: RunStatus
    output_dir: Optional[str] = None
    error: Optional[str] = None
    created_at: datetime
    finished_at: Optional[datetime] = None

class RunDetailResponse(RunResponse):
    parameters: Dict[str, Any]
    affinity_summaries: List[AffinitySummaryResponse] = []
    sweep_rows: List[SweepRowResponse] = []

    @field_validator("parameters", mode="before")
    @classmethod
    def _decode(cls, value):
        return json.loads(value) if isinstance(value, str) else value

@router.post("/order-preservation", response_model=RunDetailResponse)
def order_preservation(spec: OrderPreservationSpec, plot_data: bool = False, db: Session = Depends(get_db)):
    """Run the scorer-family simulation and store its affinity summaries"""
    run = ResultStore.start_run(db, RunKind.order_preservation, spec.model_dump(mode="json"),
                                config.LTR_OUTPUT_DIR)
    try:
        result = run_order_preservation_experiment(spec, run.output_dir, n_jobs=config.LTR_THREADS,
                                                   plot_data=plot_data)
    except Exception as e:
        ResultStore.fail_run(db, run, str(e))
        raise to_http_error(e, "running order preservation experiment")
    return ResultStore.complete_order_preservation(db, run, result)

@router.post("/erm-sweep", response_model=RunDetailResponse)
def erm_sweep(spec: SweepSpec, plot_data: bool = False, db: Session = Depends(get_db)):
    """Train on noisy labels across gammas, losses and seeds; score on clean test data"""
    run = ResultStore.start_run(db, RunKind.erm_sweep, spec.model_dump(mode="json"), config.LTR_OUTPUT_DIR)
    try:
        result = run_erm_sweep(spec, run.output_dir, n_jobs=config.LTR_THREADS, plot_data=plot_data)
    except Exception as e:
        ResultStore.fail_run(db, run, str(e))
        raise to_http_error(e, "running ERM sweep")
    return ResultStore.complete_sweep(db, run, result)

@router.get("/runs", response_model=List[RunResponse])
def list_runs(kind: Optional[RunKind] = None, db: Session = Depends(get_db)):
    try:
        return ResultStore.list_runs(db, kind)
    except Exception as e:
        raise to_http_error(e, "listing runs")

@router.get("/runs/{run_id}", response_model=RunDetailResponse)
def get_run(run_id: int, db: Session = Depends(get_db)):
    try:
        run = ResultStore.get_run(db, run_id)
        if not run:
            raise HTTPException(status_code=404, detail="Run not found")
        return run
    except HTTPException:
        raise
    except Exception as e:
        raise to_http_error(e, "fetching run")
