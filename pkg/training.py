"""
Empirical risk minimization of linear scoring functions with Adam.
"""
import logging
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, field_validator

import losses
from data import Dataset, LabelSet, QueryGroup
from errors import (GridSearchError, InputError, LtrNoiseError, RiskUndefinedError,
                    TrainingDivergedError)
from losses import LossKind, MarginLoss, ScoringMode
from metrics import MetricValue, mean_metric, parse_metric_name, ranked_queries
from seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

LEARNING_RATE_GRID = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
WEIGHT_DECAY_GRID = [1e-5, 1e-4, 1e-3]


@dataclass(frozen=True, eq=False)
class LinearScorer:
    weights: np.ndarray
    bias: float = 0.0

    @classmethod
    def zeros(cls, dim: int) -> "LinearScorer":
        return cls(np.zeros(dim), 0.0)

    @classmethod
    def from_params(cls, params: np.ndarray) -> "LinearScorer":
        params = np.asarray(params, dtype=float)
        return cls(params[:-1].copy(), float(params[-1]))

    @property
    def dim(self) -> int:
        return int(self.weights.size)

    @property
    def params(self) -> np.ndarray:
        return np.append(self.weights, self.bias)

    def scores(self, query: QueryGroup) -> np.ndarray:
        if query.features.shape[1] != self.dim:
            raise InputError(f"Model has {self.dim} weights, query {query.query_id!r} has "
                             f"{query.features.shape[1]} features")
        return query.features @ self.weights + self.bias


def score(model: LinearScorer, x) -> float:
    """<w, x> + b"""
    x = np.asarray(x, dtype=float)
    if x.shape != model.weights.shape:
        raise InputError(f"Feature vector has dimension {x.size}, model expects {model.dim}")
    return float(x @ model.weights + model.bias)


@dataclass(eq=False)
class AdamState:
    learning_rate: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: Optional[np.ndarray] = None
    second_moment: Optional[np.ndarray] = None

    def fresh(self, dim: int) -> "AdamState":
        """A zeroed copy of this template for `dim` parameters"""
        return AdamState(self.learning_rate, self.weight_decay, self.beta1, self.beta2, self.epsilon,
                         0, np.zeros(dim), np.zeros(dim))


def adam_step(state: AdamState, params: np.ndarray, gradient: np.ndarray) -> Tuple[np.ndarray, AdamState]:
    """
    One bias-corrected Adam update with decoupled weight decay:
    params <- params * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps)
    """
    params = np.asarray(params, dtype=float)
    gradient = np.asarray(gradient, dtype=float)
    if params.shape != gradient.shape:
        raise InputError("Gradient and parameters differ in shape")
    if not np.all(np.isfinite(gradient)):
        raise TrainingDivergedError(f"Non-finite gradient at step {state.step_count + 1}")

    m = np.zeros_like(params) if state.first_moment is None else state.first_moment
    v = np.zeros_like(params) if state.second_moment is None else state.second_moment
    if m.shape != params.shape or v.shape != params.shape:
        raise InputError("Optimizer moments do not match the parameter dimension")

    t = state.step_count + 1
    m = state.beta1 * m + (1.0 - state.beta1) * gradient
    v = state.beta2 * v + (1.0 - state.beta2) * (gradient * gradient)
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)

    decayed = params * (1.0 - state.learning_rate * state.weight_decay)
    updated = decayed - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = AdamState(state.learning_rate, state.weight_decay, state.beta1, state.beta2, state.epsilon,
                          t, m, v)
    return updated, new_state


class RiskDesign:
    """
    The empirical risk of a query batch, laid out so that risk and gradient are
    two matrix products. Rows are documents (pointwise) or mixed-label pairs
    (pairwise, oriented relevant-minus-irrelevant); weights average per query
    first and then over queries.
    """

    def __init__(self, queries: Sequence[QueryGroup], loss: MarginLoss, mode: ScoringMode,
                 labels: LabelSet = LabelSet.noisy):
        self.loss = losses.get_loss(loss)
        self.mode = ScoringMode(mode)
        rows, weights = [], []
        if self.mode is ScoringMode.pointwise:
            total = sum(q.size for q in queries)
            for q in queries:
                sign = 2.0 * q.labels_for(labels) - 1.0
                augmented = np.hstack([q.features, np.ones((q.size, 1))])
                rows.append(augmented * sign[:, None])
                weights.append(np.full(q.size, 1.0 / total))
        else:
            mixed = [q for q in queries if q.has_mixed_labels(labels)]
            for q in mixed:
                y = q.labels_for(labels)
                pos = np.flatnonzero(y == 1)
                neg = np.flatnonzero(y == 0)
                diffs = (q.features[pos][:, None, :] - q.features[neg][None, :, :]).reshape(-1, q.features.shape[1])
                rows.append(np.hstack([diffs, np.zeros((diffs.shape[0], 1))]))
                weights.append(np.full(diffs.shape[0], 1.0 / (diffs.shape[0] * len(mixed))))
        if rows:
            self.rows = np.vstack(rows)
            self.weights = np.concatenate(weights)
        else:
            self.rows = np.zeros((0, (queries[0].features.shape[1] if queries else 0) + 1))
            self.weights = np.zeros(0)

    @property
    def n_terms(self) -> int:
        return int(self.weights.size)

    def margins(self, params: np.ndarray) -> np.ndarray:
        return self.rows @ params

    def risk(self, params: np.ndarray) -> float:
        if not self.n_terms:
            raise RiskUndefinedError("No risk terms (pairwise batch without mixed-label pairs)")
        with np.errstate(over="ignore"):
            return float(self.weights @ losses.evaluate(self.loss, self.margins(params)))

    def gradient(self, params: np.ndarray) -> np.ndarray:
        if not self.n_terms:
            raise RiskUndefinedError("No risk terms (pairwise batch without mixed-label pairs)")
        with np.errstate(over="ignore", invalid="ignore"):
            slopes = losses.derivative(self.loss, self.margins(params))
            return self.rows.T @ (self.weights * slopes)


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    loss: LossKind = LossKind.symmetrized_logistic
    mode: ScoringMode = ScoringMode.pointwise
    max_epochs: int = Field(default=2000, ge=0)
    patience: int = Field(default=10, ge=1)
    min_delta: float = Field(default=1e-5, ge=0.0)
    # None trains full-batch; otherwise this many queries per mini-batch
    batch_queries: Optional[int] = Field(default=None, ge=1)
    labels: LabelSet = LabelSet.noisy
    seed: int = Field(default=0, ge=0)

    @field_validator("loss")
    @classmethod
    def _needs_derivative(cls, value: LossKind) -> LossKind:
        if value is LossKind.zero_one:
            raise ValueError("zero_one has no derivative and cannot be trained with gradients")
        return value


def _as_queries(batch: Union[Dataset, Iterable[QueryGroup]]) -> List[QueryGroup]:
    return list(batch.queries) if isinstance(batch, Dataset) else list(batch)


def empirical_gradient(model: LinearScorer, batch, config: TrainConfig) -> np.ndarray:
    """Gradient of the batch risk w.r.t. (weights..., bias)"""
    design = RiskDesign(_as_queries(batch), losses.get_loss(config.loss), config.mode, config.labels)
    return design.gradient(model.params)


def objective_value(model: LinearScorer, batch, config: TrainConfig) -> float:
    design = RiskDesign(_as_queries(batch), losses.get_loss(config.loss), config.mode, config.labels)
    return design.risk(model.params)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    holdout_loss: float


@dataclass(eq=False)
class TrainResult:
    model: LinearScorer
    history: List[EpochRecord]
    best_epoch: int = 0
    skipped_batches: int = 0


def train(train_ds: Dataset, holdout_ds: Dataset, config: TrainConfig, opt: AdamState) -> TrainResult:
    """
    Adam on the training risk, early-stopped on the holdout risk. Returns the
    parameters of the best trained holdout epoch; the first epoch always sets
    the baseline, later ones must beat it by `min_delta`. With max_epochs=0
    the zero initialization comes back with an empty history.
    """
    if train_ds.feature_dim != holdout_ds.feature_dim:
        raise InputError("Training and holdout data have different feature dimensions")
    loss = losses.get_loss(config.loss)
    train_design = RiskDesign(train_ds.queries, loss, config.mode, config.labels)
    holdout_design = RiskDesign(holdout_ds.queries, loss, config.mode, config.labels)
    if not train_design.n_terms:
        raise InputError("Pairwise training needs at least one query with mixed labels")
    if not holdout_design.n_terms:
        raise InputError("Pairwise early stopping needs a holdout query with mixed labels")

    dim = train_ds.feature_dim + 1
    params = np.zeros(dim)
    state = opt.fresh(dim)
    history: List[EpochRecord] = []
    # the zero initialization is only returned when no epoch runs
    best_params, best_loss, best_epoch = params.copy(), math.inf, 0
    stale = 0
    skipped = 0
    rng = make_rng(config.seed, "batches")

    for epoch in range(1, config.max_epochs + 1):
        if config.batch_queries is None:
            batches = [train_design]
        else:
            order = rng.permutation(len(train_ds))
            batches = [
                RiskDesign([train_ds.queries[i] for i in order[start:start + config.batch_queries]],
                           loss, config.mode, config.labels)
                for start in range(0, len(order), config.batch_queries)
            ]
        used = 0
        for batch in batches:
            if not batch.n_terms:
                skipped += 1
                continue
            try:
                params, state = adam_step(state, params, batch.gradient(params))
            except TrainingDivergedError as e:
                raise TrainingDivergedError(str(e), history)
            used += 1
        if not used:
            raise RiskUndefinedError(f"Every batch of epoch {epoch} lacked mixed-label pairs")

        train_loss = train_design.risk(params)
        holdout_loss = holdout_design.risk(params)
        if not (math.isfinite(train_loss) and math.isfinite(holdout_loss)):
            raise TrainingDivergedError(f"Loss became non-finite at epoch {epoch}", history)
        history.append(EpochRecord(epoch, train_loss, holdout_loss))
        logger.debug("epoch %d train %.6f holdout %.6f", epoch, train_loss, holdout_loss)

        if holdout_loss < best_loss - config.min_delta:
            best_params, best_loss, best_epoch = params.copy(), holdout_loss, epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                logger.debug("early stop at epoch %d (best %d)", epoch, best_epoch)
                break

    if skipped:
        logger.warning("skipped %d batches without mixed-label pairs", skipped)
    return TrainResult(LinearScorer.from_params(best_params), history, best_epoch, skipped)


@dataclass(frozen=True)
class GridCell:
    learning_rate: float
    weight_decay: float
    holdout_loss: Optional[float]
    epochs: int
    error: Optional[str] = None


@dataclass(eq=False)
class GridSearchResult:
    model: LinearScorer
    learning_rate: float
    weight_decay: float
    holdout_loss: float
    history: List[EpochRecord]
    cells: List[GridCell] = field(default_factory=list)


def _run_cell(train_ds, holdout_ds, config: TrainConfig, lr: float, wd: float):
    cell_config = config.model_copy(update={"seed": derive_seed(config.seed, f"{lr!r}/{wd!r}") % (2 ** 32)})
    try:
        result = train(train_ds, holdout_ds, cell_config, AdamState(learning_rate=lr, weight_decay=wd))
    except LtrNoiseError as e:
        logger.warning("grid cell lr=%g wd=%g failed: %s", lr, wd, e)
        history = getattr(e, "history", [])
        return GridCell(lr, wd, None, len(history), str(e)), None
    holdout = RiskDesign(holdout_ds.queries, losses.get_loss(config.loss), config.mode, config.labels)
    loss = holdout.risk(result.model.params)
    return GridCell(lr, wd, loss, len(result.history)), result


def grid_search(train_ds: Dataset, holdout_ds: Dataset, config: TrainConfig,
                lr_grid: Sequence[float] = LEARNING_RATE_GRID,
                wd_grid: Sequence[float] = WEIGHT_DECAY_GRID,
                n_jobs: int = 1) -> GridSearchResult:
    """Train every (lr, wd) cell and keep the lowest holdout loss; ties go to smaller lr, then wd"""
    lrs = sorted(set(float(v) for v in lr_grid))
    wds = sorted(set(float(v) for v in wd_grid))
    if not lrs or not wds:
        raise InputError("Grids must be nonempty")

    cells = list(product(lrs, wds))
    outcomes = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_run_cell)(train_ds, holdout_ds, config, lr, wd) for lr, wd in cells
    )
    finished = [(cell, result) for cell, result in outcomes if result is not None]
    if not finished:
        raise GridSearchError("Every grid cell failed",
                              [(c.learning_rate, c.weight_decay, c.error) for c, _ in outcomes])

    cell, result = min(finished, key=lambda item: (item[0].holdout_loss, item[0].learning_rate,
                                                   item[0].weight_decay))
    logger.info("grid search %s/%s: best lr=%g wd=%g holdout=%.6f", config.loss.value, config.mode.value,
                cell.learning_rate, cell.weight_decay, cell.holdout_loss)
    return GridSearchResult(result.model, cell.learning_rate, cell.weight_decay, cell.holdout_loss,
                            result.history, [c for c, _ in outcomes])


def evaluate_model(model: LinearScorer, ds: Dataset, metric_names: Iterable[str],
                   labels: LabelSet = LabelSet.clean) -> Dict[str, MetricValue]:
    queries = ranked_queries((q.query_id, model.scores(q), q.labels_for(labels)) for q in ds.queries)
    return {name: mean_metric(queries, parse_metric_name(name)) for name in metric_names}


def save_model(model: LinearScorer, path) -> None:
    """Plain text: one weight per line, bias last"""
    with open(path, "w", encoding="utf-8") as f:
        for value in model.params:
            f.write(f"{float(value)!r}\n")


def load_model(path) -> LinearScorer:
    with open(path, encoding="utf-8") as f:
        values = [float(line) for line in f if line.strip()]
    if len(values) < 2:
        raise InputError(f"{path}: a model file needs at least one weight and a bias")
    return LinearScorer.from_params(np.array(values))
