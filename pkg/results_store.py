import json
import logging
import math
import os
from datetime import datetime
from typing import List, Optional

from sqlalchemy.orm import Session

from experiments import OrderPreservationResult, SweepResult
from models import AffinitySummaryRecord, ExperimentRun, RunKind, RunStatus, SweepRowRecord

logger = logging.getLogger(__name__)


def _finite_or_none(value) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


class ResultStore:
    @staticmethod
    def start_run(db: Session, kind: RunKind, parameters: dict, output_root: Optional[str] = None) -> ExperimentRun:
        """Record a run before its computation starts; its files go to <output_root>/<kind>_<id>"""
        run = ExperimentRun(
            kind=kind,
            status=RunStatus.running,
            parameters=json.dumps(parameters, sort_keys=True, default=str),
        )
        db.add(run)
        db.commit()
        if output_root is not None:
            run.output_dir = os.path.join(output_root, f"{kind.value}_{run.id}")
            db.commit()
        db.refresh(run)
        logger.info("run %d (%s) started", run.id, kind.value)
        return run

    @staticmethod
    def complete_order_preservation(db: Session, run: ExperimentRun, result: OrderPreservationResult) -> ExperimentRun:
        for report in result.reports:
            db.add(AffinitySummaryRecord(
                run_id=run.id,
                objective=report.objective,
                gamma=report.gamma,
                draws=report.draws,
                slope=report.slope,
                intercept=report.intercept,
                r_squared=report.r_squared,
                spearman_rho=_finite_or_none(report.spearman_rho),
                predicted_slope=report.predicted_slope,
                predicted_intercept=_finite_or_none(report.predicted_intercept),
                slope_se=_finite_or_none(report.slope_se),
                intercept_se=_finite_or_none(report.intercept_se),
                low_confidence=report.low_confidence,
            ))
        return ResultStore._finish(db, run, RunStatus.completed)

    @staticmethod
    def complete_sweep(db: Session, run: ExperimentRun, result: SweepResult) -> ExperimentRun:
        for row in result.rows:
            db.add(SweepRowRecord(
                run_id=run.id,
                gamma=row.gamma,
                loss=row.loss,
                seed=row.seed,
                metric=row.metric,
                value=_finite_or_none(row.value),
                status=row.status,
                error=row.error,
                source=row.source,
            ))
        return ResultStore._finish(db, run, RunStatus.completed)

    @staticmethod
    def fail_run(db: Session, run: ExperimentRun, error: str) -> ExperimentRun:
        db.rollback()
        logger.warning("run %d failed: %s", run.id, error)
        return ResultStore._finish(db, run, RunStatus.failed, error)

    @staticmethod
    def _finish(db: Session, run: ExperimentRun, status: RunStatus, error: Optional[str] = None) -> ExperimentRun:
        run.status = status
        run.error = error
        run.finished_at = datetime.now()
        db.commit()
        db.refresh(run)
        return run

    @staticmethod
    def list_runs(db: Session, kind: Optional[RunKind] = None) -> List[ExperimentRun]:
        query = db.query(ExperimentRun)
        if kind is not None:
            query = query.filter(ExperimentRun.kind == kind)
        return query.order_by(ExperimentRun.created_at.desc(), ExperimentRun.id.desc()).all()

    @staticmethod
    def get_run(db: Session, run_id: int) -> Optional[ExperimentRun]:
        return db.query(ExperimentRun).filter(ExperimentRun.id == run_id).first()
