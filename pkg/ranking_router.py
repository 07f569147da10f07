from typing import Dict, List, Optional

import numpy as np
from fastapi import APIRouter, HTTPException
from pydantic import BaseModel, Field

import losses
import metrics
from dependencies import to_http_error
from losses import LOSSES, LossKind, SymmetryReport
from risk_lab import deviation_bound, expected_excess_bound

router = APIRouter(tags=["ranking"])

class LossInfo(BaseModel):
    name: str
    differentiable: bool
    label_symmetric: bool
    symmetry_constant: Optional[float] = None
    # None when the loss is defined on every margin
    domain: Optional[List[float]] = None

class LossEvaluateRequest(BaseModel):
    loss: str
    margins: List[float] = Field(min_length=1)
    with_derivative: bool = False

class LossEvaluateResponse(BaseModel):
    loss: str
    values: List[float]
    derivatives: Optional[List[float]] = None

class SymmetryRequest(BaseModel):
    margins: List[float] = Field(default_factory=lambda: [0.25, 0.5, 1.0, 2.0, 3.0])
    tol: float = Field(default=1e-9, gt=0)

class QueryIn(BaseModel):
    query_id: str = ""
    scores: List[float]
    labels: List[int]

class MetricRequest(BaseModel):
    metric: str
    queries: List[QueryIn] = Field(min_length=1)

class MetricResponse(BaseModel):
    metric: str
    mean: float
    per_query: Dict[str, Optional[float]]
    queries_used: int
    queries_skipped: int

class DeviationBoundRequest(BaseModel):
    n: int
    epsilon: float
    gamma: float
    shatter_log: float
    optimization_slack: float = 0.0
    failure_probability: float = 0.0

class ExpectedExcessRequest(BaseModel):
    n: int
    gamma: float
    shatter_log: float

class BoundResponse(BaseModel):
    bound: float

def _loss_info(loss) -> LossInfo:
    low, high = loss.domain
    return LossInfo(
        name=loss.name,
        differentiable=loss.differentiable,
        label_symmetric=loss.label_symmetric,
        symmetry_constant=loss.symmetry_constant,
        domain=[float(low), float(high)] if np.isfinite(low) and np.isfinite(high) else None,
    )

@router.get("/losses", response_model=List[LossInfo])
def list_losses():
    """Canonical loss names with their properties"""
    return [_loss_info(LOSSES[kind]) for kind in LossKind]

@router.post("/losses/evaluate", response_model=LossEvaluateResponse)
def evaluate_losses(request: LossEvaluateRequest):
    try:
        loss = losses.get_loss(request.loss)
        values = np.atleast_1d(losses.evaluate(loss, request.margins))
        derivatives = None
        if request.with_derivative and loss.kind is not LossKind.zero_one:
            derivatives = [float(v) for v in np.atleast_1d(losses.derivative(loss, request.margins))]
        return LossEvaluateResponse(loss=loss.name, values=[float(v) for v in values], derivatives=derivatives)
    except HTTPException:
        raise
    except Exception as e:
        raise to_http_error(e, "evaluating loss")

@router.post("/losses/{name}/symmetry", response_model=SymmetryReport)
def check_symmetry(name: str, request: SymmetryRequest):
    try:
        return losses.check_label_symmetry(name, request.margins, request.tol)
    except HTTPException:
        raise
    except Exception as e:
        raise to_http_error(e, "checking label symmetry")

@router.post("/metrics/evaluate", response_model=MetricResponse)
def evaluate_metric(request: MetricRequest):
    """Per-query values and their mean over the queries where the metric is defined"""
    try:
        metric = metrics.parse_metric_name(request.metric)
        queries = metrics.ranked_queries((q.query_id, q.scores, q.labels) for q in request.queries)
        summary = metrics.mean_metric(queries, metric)
        per_query = {q.query_id or str(i): metrics.query_metric(q, metric) for i, q in enumerate(queries)}
        return MetricResponse(metric=str(metric), mean=summary.value, per_query=per_query,
                              queries_used=summary.queries_used, queries_skipped=summary.queries_skipped)
    except HTTPException:
        raise
    except Exception as e:
        raise to_http_error(e, "evaluating metric")

@router.post("/bounds/deviation", response_model=BoundResponse)
def bound_deviation(request: DeviationBoundRequest):
    try:
        return BoundResponse(bound=deviation_bound(**request.model_dump()))
    except Exception as e:
        raise to_http_error(e, "computing deviation bound")

@router.post("/bounds/expected-excess", response_model=BoundResponse)
def bound_expected_excess(request: ExpectedExcessRequest):
    try:
        return BoundResponse(bound=expected_excess_bound(**request.model_dump()))
    except Exception as e:
        raise to_http_error(e, "computing expected excess bound")
