from sqlalchemy import Column, Integer, String, ForeignKey, DateTime, Enum, Text, Boolean, Float
from sqlalchemy.orm import relationship
from database import Base
import enum
from datetime import datetime

class RunKind(enum.Enum):
    order_preservation = "order_preservation"
    erm_sweep = "erm_sweep"

class RunStatus(enum.Enum):
    running = "running"
    completed = "completed"
    failed = "failed"

class ExperimentRun(Base):
    __tablename__ = "experiment_runs"
    id = Column(Integer, primary_key=True, index=True)
    kind = Column(Enum(RunKind), nullable=False)
    status = Column(Enum(RunStatus), default=RunStatus.running, nullable=False)
    parameters = Column(Text, nullable=False)  # experiment parameters as JSON
    output_dir = Column(String(500), nullable=True)
    error = Column(Text, nullable=True)
    created_at = Column(DateTime, default=datetime.now)
    finished_at = Column(DateTime, nullable=True)

    # Relationships
    affinity_summaries = relationship("AffinitySummaryRecord", back_populates="run", cascade="all, delete-orphan")
    sweep_rows = relationship("SweepRowRecord", back_populates="run", cascade="all, delete-orphan")

class AffinitySummaryRecord(Base):
    __tablename__ = "affinity_summaries"
    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("experiment_runs.id"), nullable=False)
    objective = Column(String(50), nullable=False)
    gamma = Column(Float, nullable=False)
    draws = Column(Integer, nullable=False)
    slope = Column(Float, nullable=False)
    intercept = Column(Float, nullable=False)
    r_squared = Column(Float, nullable=False)
    spearman_rho = Column(Float, nullable=True)  # NaN (constant risks) stored as NULL
    predicted_slope = Column(Float, nullable=False)
    predicted_intercept = Column(Float, nullable=True)
    slope_se = Column(Float, nullable=True)
    intercept_se = Column(Float, nullable=True)
    low_confidence = Column(Boolean, default=False)

    run = relationship("ExperimentRun", back_populates="affinity_summaries")

class SweepRowRecord(Base):
    __tablename__ = "sweep_rows"
    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("experiment_runs.id"), nullable=False)
    gamma = Column(Float, nullable=False)
    loss = Column(String(50), nullable=False)
    seed = Column(Integer, nullable=False)
    metric = Column(String(20), nullable=False)
    value = Column(Float, nullable=True)
    status = Column(String(10), nullable=False, default="ok")
    error = Column(Text, nullable=True)
    source = Column(String(100), nullable=False, default="")  # generator or file the rows came from

    run = relationship("ExperimentRun", back_populates="sweep_rows")
