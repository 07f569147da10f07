"""
End-to-end experiments: the order-preservation simulation over a scorer
family, and the ERM sweep over noise levels, losses and seeds.
Both write RFC-4180 CSV through pandas.
"""
import logging
import os
from dataclasses import dataclass, field
from itertools import product
from typing import Dict, List, Literal, Optional, Tuple, Union

import pandas as pd
import yaml
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, field_validator

from data import (Dataset, NormalizationMode, SyntheticSpec, binarize, fit_normalizer, generate_synthetic,
                  parse_letor, split)
from errors import GridSearchError, InputError, LtrNoiseError
from noise import NoiseSpec, corrupt_dataset
from risk_lab import AffinityReport, ScorerFamily, affinity_analysis, parse_objective
from seeding import derive_seed
from training import LEARNING_RATE_GRID, WEIGHT_DECAY_GRID, TrainConfig, evaluate_model, grid_search

logger = logging.getLogger(__name__)

POINT_COLUMNS = ["scorer_id", "perturbation", "scale", "clean_risk", "noisy_risk"]
SUMMARY_COLUMNS = ["objective", "gamma", "draws", "slope", "intercept", "r_squared", "spearman_rho",
                   "predicted_slope", "predicted_intercept", "slope_se", "intercept_se", "low_confidence"]
SWEEP_COLUMNS = ["gamma", "loss", "seed", "metric", "value", "status", "error", "source"]


def _load_yaml(path) -> dict:
    with open(path, encoding="utf-8") as f:
        content = yaml.safe_load(f) or {}
    if not isinstance(content, dict):
        raise InputError(f"{path}: expected a mapping at the top level")
    return content


def file_stem(objective: str) -> str:
    """'ndcg@10' -> 'ndcg_at_10'; 'logistic:pairwise' -> 'logistic_pairwise'"""
    return objective.replace("@", "_at_").replace(":", "_")


class OrderPreservationSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    objectives: List[str] = Field(default_factory=lambda: ["auc", "ndcg@10", "map", "logistic", "exponential"])
    gamma: float = Field(default=0.9, ge=0.0, le=1.0)
    family: ScorerFamily = Field(default_factory=ScorerFamily)
    draws: int = Field(default=1000, ge=1)
    queries_per_draw: int = Field(default=100, ge=1)
    pool_queries: int = Field(default=1000, ge=1)
    docs_per_query: int = Field(default=10, ge=2)
    feature_dim: int = Field(default=5, ge=1)
    prevalence_range: Optional[Tuple[float, float]] = (0.1, 0.9)
    seed: int = Field(default=0, ge=0)

    @field_validator("objectives")
    @classmethod
    def _known_objectives(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("at least one objective is required")
        # InputError is a ValueError, so pydantic reports it as a validation error
        return [parse_objective(name).name for name in value]

    @classmethod
    def from_yaml(cls, path) -> "OrderPreservationSpec":
        return cls.model_validate(_load_yaml(path))

    def pool(self) -> Dataset:
        return generate_synthetic(SyntheticSpec(
            num_queries=self.pool_queries,
            docs_per_query=self.docs_per_query,
            feature_dim=self.feature_dim,
            seed=self.seed,
            prevalence_range=self.prevalence_range,
        ))


@dataclass(eq=False)
class OrderPreservationResult:
    reports: List[AffinityReport]
    files: List[str] = field(default_factory=list)

    def summary_rows(self) -> List[dict]:
        return [{column: getattr(r, column) for column in SUMMARY_COLUMNS} for r in self.reports]


def points_frame(report: AffinityReport) -> pd.DataFrame:
    return pd.DataFrame([p.model_dump(include=set(POINT_COLUMNS)) for p in report.points], columns=POINT_COLUMNS)


def run_order_preservation_experiment(spec: OrderPreservationSpec, out_dir, n_jobs: int = 1,
                                      plot_data: bool = False) -> OrderPreservationResult:
    """Affinity analysis per objective; one point CSV each plus a combined summary"""
    objectives = [parse_objective(name) for name in spec.objectives]
    os.makedirs(out_dir, exist_ok=True)
    pool = spec.pool()
    logger.info("order preservation: %d objectives, gamma=%.3f, pool of %d queries",
                len(objectives), spec.gamma, len(pool))

    result = OrderPreservationResult(reports=[])
    for objective in objectives:
        report = affinity_analysis(spec.family, pool, objective, spec.gamma, spec.draws,
                                   spec.queries_per_draw, derive_seed(spec.seed, "affinity", objective.name),
                                   n_jobs)
        result.reports.append(report)
        points = points_frame(report)
        path = os.path.join(out_dir, f"order_preservation_{file_stem(objective.name)}.csv")
        points.to_csv(path, index=False)
        result.files.append(path)
        logger.info("%s: slope %.4f intercept %.4f r2 %.4f rho %.4f", objective.name, report.slope,
                    report.intercept, report.r_squared, report.spearman_rho)

    summary_path = os.path.join(out_dir, "order_preservation_summary.csv")
    pd.DataFrame(result.summary_rows(), columns=SUMMARY_COLUMNS).to_csv(summary_path, index=False)
    result.files.append(summary_path)

    if plot_data:
        long = pd.DataFrame([
            {"objective": r.objective, "scorer_id": p.scorer_id, "clean_risk": p.clean_risk,
             "noisy_risk": p.noisy_risk, "scale": p.scale}
            for r in result.reports for p in r.points
        ])
        plot_path = os.path.join(out_dir, "plot_order_preservation.csv")
        long.to_csv(plot_path, index=False)
        result.files.append(plot_path)

    logger.info("wrote %d files to %s", len(result.files), out_dir)
    return result


class SyntheticSource(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["synthetic"] = "synthetic"
    total_samples: int = Field(default=500, ge=2)
    docs_per_query: int = Field(default=10, ge=2)
    feature_dim: int = Field(default=5, ge=1)
    label_mode: Literal["bernoulli", "threshold"] = "threshold"
    theta_mode: Literal["per_query", "shared"] = "shared"

    def describe(self) -> str:
        """e.g. 'synthetic:threshold/shared' (label mode / theta mode)"""
        return f"synthetic:{self.label_mode}/{self.theta_mode}"


class LetorSource(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["letor"] = "letor"
    path: str
    relevance_threshold: int = Field(default=1, ge=1)
    normalization: Optional[NormalizationMode] = NormalizationMode.per_query_min_max

    def describe(self) -> str:
        return f"letor:{os.path.basename(self.path)}"


class SweepSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    gammas: List[float] = Field(default_factory=lambda: [1.0, 0.9, 0.8, 0.7, 0.6, 0.51])
    losses: List[str] = Field(
        default_factory=lambda: ["logistic", "ranknet", "symmetrized_logistic", "symmetrized_ranknet"])
    metrics: List[str] = Field(default_factory=lambda: ["ndcg@10", "map", "auc"])
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    source: Union[SyntheticSource, LetorSource] = Field(default_factory=SyntheticSource, discriminator="kind")
    learning_rates: List[float] = Field(default_factory=lambda: list(LEARNING_RATE_GRID))
    weight_decays: List[float] = Field(default_factory=lambda: list(WEIGHT_DECAY_GRID))
    test_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    holdout_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    batch_queries: Optional[int] = Field(default=None, ge=1)
    max_epochs: int = Field(default=2000, ge=1)
    patience: int = Field(default=10, ge=1)

    @field_validator("gammas")
    @classmethod
    def _above_half(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("at least one gamma is required")
        for g in value:
            if not 0.5 < g <= 1.0:
                raise ValueError(f"gamma {g} is outside (0.5, 1]")
        return value

    @field_validator("losses")
    @classmethod
    def _trainable_losses(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("at least one loss is required")
        for name in value:
            objective = parse_objective(name)
            if objective.is_metric or not objective.loss.differentiable:
                raise ValueError(f"'{name}' cannot be trained with gradients")
        return value

    @field_validator("metrics")
    @classmethod
    def _metrics(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("at least one metric is required")
        for name in value:
            if not parse_objective(name).is_metric:
                raise ValueError(f"'{name}' is not a ranking metric")
        return value

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("at least one seed is required")
        if any(s < 0 for s in value):
            raise ValueError("seeds must be non-negative")
        return value

    @classmethod
    def from_yaml(cls, path) -> "SweepSpec":
        return cls.model_validate(_load_yaml(path))


@dataclass(frozen=True)
class SweepRow:
    gamma: float
    loss: str
    seed: int
    metric: str
    value: Optional[float]
    status: str = "ok"
    error: Optional[str] = None
    source: str = ""

    @property
    def failed(self) -> bool:
        return self.status != "ok"


@dataclass(eq=False)
class SweepResult:
    rows: List[SweepRow]
    files: List[str] = field(default_factory=list)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(r) for r in self.rows], columns=SWEEP_COLUMNS)

    def medians(self) -> pd.DataFrame:
        """Median over seeds per (gamma, loss, metric), failed rows excluded"""
        ok = self.frame()
        ok = ok[ok["status"] == "ok"]
        grouped = ok.groupby(["gamma", "loss", "metric"], sort=True)["value"]
        return grouped.agg(median="median", n_seeds="count").reset_index()


@dataclass(frozen=True, eq=False)
class SeedSplits:
    train: Dataset
    holdout: Dataset
    test: Dataset


def _load_source(spec: SweepSpec, seed: int) -> Dataset:
    source = spec.source
    if isinstance(source, SyntheticSource):
        return generate_synthetic(SyntheticSpec(
            total_samples=source.total_samples, docs_per_query=source.docs_per_query,
            feature_dim=source.feature_dim, label_mode=source.label_mode, theta_mode=source.theta_mode,
            seed=seed,
        ))
    return binarize(parse_letor(source.path), source.relevance_threshold)


def prepare_splits(spec: SweepSpec, seed: int, letor: Optional[Dataset] = None) -> SeedSplits:
    """Clean test split first, then training/holdout from the rest"""
    ds = letor if letor is not None else _load_source(spec, seed)
    rest, test = split(ds, 1.0 - spec.test_fraction, derive_seed(seed, "test-split"))
    train, holdout = split(rest, 1.0 - spec.holdout_fraction, derive_seed(seed, "holdout-split"))
    normalization = getattr(spec.source, "normalization", None)
    if normalization is not None:
        normalizer = fit_normalizer(train, normalization)
        train, holdout, test = (normalizer.transform(d) for d in (train, holdout, test))
    return SeedSplits(train, holdout, test)


def _run_sweep_cell(spec: SweepSpec, gamma: float, loss_name: str, seed: int, splits: SeedSplits) -> List[SweepRow]:
    source = spec.source.describe()
    objective = parse_objective(loss_name)
    noise = NoiseSpec(gamma=gamma, seed=derive_seed(seed, "noise", repr(gamma)))
    train_ds = corrupt_dataset(splits.train, noise)
    holdout_ds = corrupt_dataset(splits.holdout, noise)
    config = TrainConfig(loss=objective.loss.kind, mode=objective.mode, max_epochs=spec.max_epochs,
                         patience=spec.patience, batch_queries=spec.batch_queries,
                         seed=derive_seed(seed, "train", loss_name) % (2 ** 32))
    try:
        best = grid_search(train_ds, holdout_ds, config, spec.learning_rates, spec.weight_decays)
    except (GridSearchError, InputError) as e:
        logger.warning("sweep cell gamma=%s loss=%s seed=%d failed: %s", gamma, loss_name, seed, e)
        return [SweepRow(gamma, loss_name, seed, m, None, "failed", str(e), source) for m in spec.metrics]

    rows = []
    for metric in spec.metrics:
        try:
            value = evaluate_model(best.model, splits.test, [metric])[metric].value
            rows.append(SweepRow(gamma, loss_name, seed, metric, value, source=source))
        except LtrNoiseError as e:
            rows.append(SweepRow(gamma, loss_name, seed, metric, None, "failed", str(e), source))
    logger.info("sweep cell gamma=%s loss=%s seed=%d: lr=%g wd=%g", gamma, loss_name, seed,
                best.learning_rate, best.weight_decay)
    return rows


def run_erm_sweep(spec: SweepSpec, out_dir, n_jobs: int = 1, plot_data: bool = False) -> SweepResult:
    """
    For each (gamma, loss, seed): corrupt the training and holdout labels,
    grid-search a linear scorer on the noisy data and score it on the clean
    test split. A cell whose every grid point fails yields failure rows.
    """
    os.makedirs(out_dir, exist_ok=True)
    letor = None
    if isinstance(spec.source, LetorSource):
        letor = binarize(parse_letor(spec.source.path), spec.source.relevance_threshold)
    splits: Dict[int, SeedSplits] = {seed: prepare_splits(spec, seed, letor) for seed in spec.seeds}

    cells = list(product(spec.gammas, spec.losses, spec.seeds))
    logger.info("ERM sweep: %d cells (%d gammas x %d losses x %d seeds)", len(cells), len(spec.gammas),
                len(spec.losses), len(spec.seeds))
    logger.info("ERM sweep data: %s", spec.source.describe())
    outcomes = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_run_sweep_cell)(spec, gamma, loss, seed, splits[seed]) for gamma, loss, seed in cells
    )
    rows = sorted((row for cell_rows in outcomes for row in cell_rows),
                  key=lambda r: (r.gamma, r.loss, r.seed, r.metric))
    result = SweepResult(rows=rows)

    path = os.path.join(out_dir, "erm_sweep.csv")
    result.frame().to_csv(path, index=False)
    result.files.append(path)
    if plot_data:
        plot_path = os.path.join(out_dir, "plot_erm_sweep.csv")
        result.medians().to_csv(plot_path, index=False)
        result.files.append(plot_path)

    failed = sum(r.failed for r in rows)
    if failed:
        logger.warning("ERM sweep: %d of %d rows failed", failed, len(rows))
    logger.info("wrote %s", ", ".join(result.files))
    return result
