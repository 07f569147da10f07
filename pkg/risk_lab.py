"""
Clean vs. noisy risk.

Estimators for pointwise and pairwise empirical risks, the affinity analysis
(regressing noisy risk on clean risk across a family of scorers), the
counterexample harness for losses that do not preserve order, and the
finite-sample bounds for ERM under class-conditional noise.
"""
import enum
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import linregress, spearmanr

import losses
from data import Dataset, LabelSet, QueryGroup
from errors import DegenerateFitError, InputError, MetricUndefinedError, RiskUndefinedError
from losses import LossKind, MarginLoss, ScoringMode
from metrics import MetricKind, MetricName, discounts, is_metric_name, metric_rows, parse_metric_name
from noise import NoiseSpec, corrupt_dataset, corrupt_labels
from seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)


class Scorer(Protocol):
    def scores(self, query: QueryGroup) -> np.ndarray:
        ...


class OracleScorer:
    """a * (P(Y=1 | x) - 1/2): the oracle, centered so pointwise margins carry the label sign"""

    def __init__(self, ds: Dataset, scale: float = 1.0):
        if not ds.has_oracle:
            raise InputError("An oracle scorer needs a synthetic dataset")
        self.ds = ds
        self.scale = float(scale)

    def scores(self, query: QueryGroup) -> np.ndarray:
        return self.scale * (self.ds.oracle_for(query.query_id).probability(query.features) - 0.5)


class BoundedRandomScorer:
    """Uniform scores in [-1, 1], fixed per (seed, query, document)"""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def scores(self, query: QueryGroup) -> np.ndarray:
        return make_rng(self.seed, "random-scorer", query.query_id).uniform(-1.0, 1.0, query.size)


class ScorerFamily(BaseModel):
    """
    Scorers of decreasing quality: scorer j adds eta_j * z to the centered
    oracle, with eta_j increasing in j; every odd scorer is multiplied by
    scale_factor.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    size: int = Field(default=100, ge=2)
    max_perturbation: float = Field(default=1.0, ge=0.0)
    scale_factor: float = Field(default=10.0, gt=0.0)
    seed: int = Field(default=0, ge=0)

    @property
    def perturbation_levels(self) -> np.ndarray:
        return np.linspace(0.0, self.max_perturbation, self.size)

    @property
    def scale_mask(self) -> np.ndarray:
        return np.arange(self.size) % 2 == 1

    @property
    def scales(self) -> np.ndarray:
        return np.where(self.scale_mask, self.scale_factor, 1.0)


class FamilyScores:
    """Score matrices (scorer x document) of a family over one dataset"""

    def __init__(self, family: ScorerFamily, ds: Dataset):
        if not ds.has_oracle:
            raise InputError("A scorer family is built on the oracle of a synthetic dataset")
        self.family = family
        self.ds = ds
        self._eta = family.perturbation_levels[:, None]
        self._scale = family.scales[:, None]

    def matrix(self, query: QueryGroup) -> np.ndarray:
        base = self.ds.oracle_for(query.query_id).probability(query.features) - 0.5
        z = make_rng(self.family.seed, "family", query.query_id).standard_normal((self.family.size, query.size))
        return (base[None, :] + self._eta * z) * self._scale


@dataclass(frozen=True, eq=False)
class FamilyMember:
    index: int
    perturbation: float
    scale: float
    source: FamilyScores

    def scores(self, query: QueryGroup) -> np.ndarray:
        return self.source.matrix(query)[self.index]


def build_scorer_family(spec: ScorerFamily, ds: Dataset) -> List[FamilyMember]:
    source = FamilyScores(spec, ds)
    return [FamilyMember(j, float(eta), float(scale), source)
            for j, (eta, scale) in enumerate(zip(spec.perturbation_levels, spec.scales))]


class RiskKind(str, enum.Enum):
    pointwise_clean = "pointwise_clean"
    pointwise_noisy = "pointwise_noisy"
    pairwise_clean = "pairwise_clean"
    pairwise_noisy = "pairwise_noisy"


class RiskEstimate(BaseModel):
    value: float
    kind: RiskKind
    # documents (pointwise) or mixed-label pairs (pairwise)
    n_terms: int = Field(ge=1)
    n_queries: int = Field(ge=1)


def _pair_margins(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Relevant-minus-irrelevant score differences over the last axis"""
    positive = labels == 1
    diff = scores[..., positive][..., :, None] - scores[..., ~positive][..., None, :]
    return diff.reshape(*scores.shape[:-1], -1)


def empirical_risk(scorer: Scorer, ds: Dataset, loss: Union[MarginLoss, str], mode: ScoringMode,
                   labels: LabelSet = LabelSet.clean) -> RiskEstimate:
    loss = losses.get_loss(loss)
    mode = ScoringMode(mode)
    labels = LabelSet(labels)
    kind = RiskKind(f"{mode.value}_{labels.value}")

    if mode is ScoringMode.pointwise:
        total, count = 0.0, 0
        for q in ds.queries:
            sign = 2 * q.labels_for(labels) - 1
            total += float(np.sum(losses.evaluate(loss, scorer.scores(q) * sign)))
            count += q.size
        return RiskEstimate(value=total / count, kind=kind, n_terms=count, n_queries=len(ds))

    per_query, pairs = [], 0
    for q in ds.queries:
        if not q.has_mixed_labels(labels):
            continue
        margins = _pair_margins(scorer.scores(q), q.labels_for(labels))
        per_query.append(float(np.mean(losses.evaluate(loss, margins))))
        pairs += margins.size
    if not per_query:
        raise RiskUndefinedError("No query has a mixed-label pair")
    return RiskEstimate(value=float(np.mean(per_query)), kind=kind, n_terms=pairs, n_queries=len(per_query))


def expected_noisy_risk(scorer: Scorer, ds: Dataset, loss: Union[MarginLoss, str], gamma: float) -> float:
    """Pointwise noisy risk averaged analytically over the flips: mean(gamma*l(a) + (1-gamma)*l(-a))"""
    loss = losses.get_loss(loss)
    total, count = 0.0, 0
    for q in ds.queries:
        margins = scorer.scores(q) * (2 * q.labels - 1)
        total += float(np.sum(gamma * losses.evaluate(loss, margins)
                              + (1 - gamma) * losses.evaluate(loss, -margins)))
        count += q.size
    return total / count


@dataclass(frozen=True)
class Objective:
    """What a scorer is judged by: a margin loss in some mode, or a ranking metric"""
    name: str
    loss: Optional[MarginLoss] = None
    mode: Optional[ScoringMode] = None
    metric: Optional[MetricName] = None

    @property
    def is_metric(self) -> bool:
        return self.metric is not None

    def query_terms(self, scores: np.ndarray, labels: np.ndarray) -> Optional[Tuple[np.ndarray, float]]:
        """
        (per-scorer value, weight) for one query, or None when undefined.
        Pointwise losses weigh queries by document count; pairwise losses and
        metrics weigh every defined query equally.
        """
        if self.metric is not None:
            values = metric_rows(scores, labels, self.metric)
            return None if values is None else (values, 1.0)
        if self.mode is ScoringMode.pointwise:
            margins = scores * (2 * labels - 1)
            return losses.evaluate(self.loss, margins).mean(axis=-1), float(labels.size)
        if labels.min() == labels.max():
            return None
        return losses.evaluate(self.loss, _pair_margins(scores, labels)).mean(axis=-1), 1.0


PAIRWISE_ALIASES = {
    "ranknet": LossKind.logistic,
    "symmetrized_ranknet": LossKind.symmetrized_logistic,
}


def parse_objective(name: str, mode: Optional[Union[str, ScoringMode]] = None) -> Objective:
    """
    'auc', 'ndcg@10', 'map', 'dcg@2' -> metric objectives;
    'ranknet', 'symmetrized_ranknet' -> pairwise losses;
    any loss name -> that loss, pointwise unless `mode` says otherwise
    ('logistic:pairwise' is accepted too).
    """
    text = name.strip().lower()
    if is_metric_name(text):
        return Objective(name=text, metric=parse_metric_name(text))
    if text in PAIRWISE_ALIASES:
        return Objective(name=text, loss=losses.get_loss(PAIRWISE_ALIASES[text]), mode=ScoringMode.pairwise)
    if ":" in text:
        text, mode = text.split(":", 1)
    try:
        resolved_mode = ScoringMode(mode) if mode is not None else ScoringMode.pointwise
    except ValueError:
        raise InputError(f"Unknown scoring mode '{mode}'")
    if text not in {k.value for k in LossKind}:
        raise InputError(f"Unknown loss or metric '{name}'")
    label = text if resolved_mode is ScoringMode.pointwise else f"{text}:pairwise"
    return Objective(name=label, loss=losses.get_loss(text), mode=resolved_mode)


class AffinityPoint(BaseModel):
    scorer_id: int
    perturbation: float
    scale: float
    clean_risk: float
    noisy_risk: float
    clean_se: Optional[float] = None
    noisy_se: Optional[float] = None


class AffinityReport(BaseModel):
    objective: str
    gamma: float
    draws: int
    slope: float
    intercept: float
    r_squared: float = Field(ge=0.0, le=1.0)
    spearman_rho: float
    slope_se: Optional[float] = None
    intercept_se: Optional[float] = None
    predicted_slope: float
    predicted_intercept: Optional[float] = None
    low_confidence: bool = False
    points: List[AffinityPoint]

    def slope_within(self, n_se: float = 3.0) -> bool:
        return self.slope_se is not None and abs(self.slope - self.predicted_slope) <= n_se * self.slope_se

    def intercept_within(self, n_se: float = 3.0) -> bool:
        return (self.intercept_se is not None and self.predicted_intercept is not None
                and abs(self.intercept - self.predicted_intercept) <= n_se * self.intercept_se)


def predicted_dcg_intercept(k: int, gamma: float, n_docs: Optional[int] = None) -> float:
    """
    Intercept of E[noisy DCG@k loss] = (2g-1) E[DCG@k loss] - (1-g) sum_i 1/D_i.
    The sum runs over min(k, n_docs) ranks.
    """
    cutoff = k if n_docs is None else min(k, n_docs)
    return -(1.0 - gamma) * float(np.sum(1.0 / discounts(cutoff)))


def _predicted_intercept(objective: Objective, gamma: float, pool: Sequence[QueryGroup]) -> Optional[float]:
    if objective.metric is not None:
        if objective.metric.kind is MetricKind.dcg:
            return float(np.mean([predicted_dcg_intercept(objective.metric.k, gamma, q.size) for q in pool]))
        return None
    # mixed-pair conditioning reweights pairwise risks, so only pointwise intercepts are exact
    if objective.mode is ScoringMode.pointwise and objective.loss.label_symmetric:
        low, high = objective.loss.domain
        if np.isinf(low) and np.isinf(high):
            return objective.loss.symmetry_constant * (1.0 - gamma)
    return None


def _run_draw(draw: int, objective: Objective, matrices: List[np.ndarray], pool: Sequence[QueryGroup],
              gamma: float, queries_per_draw: int, seed: int):
    rng = make_rng(seed, "draw", draw)
    picks = rng.choice(len(pool), size=queries_per_draw, replace=queries_per_draw > len(pool))
    noise = NoiseSpec(gamma=gamma, seed=derive_seed(seed, "noise", draw))

    m = matrices[0].shape[0]
    sums = {"clean": np.zeros(m), "noisy": np.zeros(m)}
    weights = {"clean": 0.0, "noisy": 0.0}
    for position, index in enumerate(picks):
        q = pool[index]
        # the same query may be drawn twice; each copy gets its own flips
        noisy = corrupt_labels(q.labels, noise, stream=f"{q.query_id}/{position}").noisy
        for which, y in (("clean", q.labels), ("noisy", noisy)):
            terms = objective.query_terms(matrices[index], y)
            if terms is not None:
                sums[which] += terms[0] * terms[1]
                weights[which] += terms[1]
    if not weights["clean"] or not weights["noisy"]:
        raise MetricUndefinedError(f"{objective.name} is undefined on every query of draw {draw}")
    return sums["clean"] / weights["clean"], sums["noisy"] / weights["noisy"]


def _fit(clean: np.ndarray, noisy: np.ndarray):
    if np.ptp(clean) == 0.0:
        raise DegenerateFitError("All scorers have the same clean risk; the affinity fit is undefined")
    return linregress(clean, noisy)


def _jackknife_se(clean: np.ndarray, noisy: np.ndarray) -> Tuple[float, float]:
    """
    Delete-one-draw jackknife standard errors of the (slope, intercept) fitted
    on scorer means. clean and noisy are (draws, scorers).
    """
    d = clean.shape[0]
    x = (clean.sum(axis=0) - clean) / (d - 1)
    y = (noisy.sum(axis=0) - noisy) / (d - 1)
    xc = x - x.mean(axis=1, keepdims=True)
    yc = y - y.mean(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        slopes = (xc * yc).sum(axis=1) / (xc * xc).sum(axis=1)
    intercepts = y.mean(axis=1) - slopes * x.mean(axis=1)
    scale = (d - 1) / d
    slope_se = math.sqrt(scale * np.sum((slopes - slopes.mean()) ** 2))
    intercept_se = math.sqrt(scale * np.sum((intercepts - intercepts.mean()) ** 2))
    return slope_se, intercept_se


def affinity_analysis(family: Union[ScorerFamily, Sequence[FamilyMember]], ds: Dataset,
                      objective: Union[str, Objective], gamma: float, draws: int = 1000,
                      queries_per_draw: int = 100, seed: int = 0, n_jobs: int = 1) -> AffinityReport:
    """
    Per draw: sample queries, flip their labels at gamma, and compute every
    scorer's clean and noisy risk. Scorer means across draws are regressed
    (noisy ~ clean); standard errors are delete-one-draw jackknife estimates.
    """
    if draws < 1:
        raise InputError("draws must be at least 1")
    if queries_per_draw < 1:
        raise InputError("queries_per_draw must be at least 1")
    if not 0.0 <= gamma <= 1.0:
        raise InputError("gamma must lie in [0, 1]")
    if isinstance(objective, str):
        objective = parse_objective(objective)
    if isinstance(family, ScorerFamily):
        family = build_scorer_family(family, ds)
    if not family:
        raise InputError("The scorer family is empty")
    source = family[0].source
    rows = np.array([member.index for member in family])

    pool = ds.queries
    matrices = [source.matrix(q)[rows] for q in pool]
    logger.info("affinity %s: %d scorers, %d draws x %d queries, gamma=%.3f",
                objective.name, len(family), draws, queries_per_draw, gamma)

    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_run_draw)(d, objective, matrices, pool, gamma, queries_per_draw, seed) for d in range(draws)
    )
    clean = np.vstack([r[0] for r in results])
    noisy = np.vstack([r[1] for r in results])
    clean_mean, noisy_mean = clean.mean(axis=0), noisy.mean(axis=0)

    fit = _fit(clean_mean, noisy_mean)
    rho = spearmanr(clean_mean, noisy_mean)[0]

    slope_se = intercept_se = None
    clean_se = noisy_se = [None] * len(family)
    if draws >= 2:
        slope_se, intercept_se = _jackknife_se(clean, noisy)
        clean_se = list(clean.std(axis=0, ddof=1) / math.sqrt(draws))
        noisy_se = list(noisy.std(axis=0, ddof=1) / math.sqrt(draws))
    low_confidence = slope_se is None
    if low_confidence:
        logger.warning("affinity %s: %d draw(s) give no standard error; fit is low-confidence",
                       objective.name, draws)

    points = [
        AffinityPoint(scorer_id=m.index, perturbation=m.perturbation, scale=m.scale,
                      clean_risk=float(clean_mean[j]), noisy_risk=float(noisy_mean[j]),
                      clean_se=None if clean_se[j] is None else float(clean_se[j]),
                      noisy_se=None if noisy_se[j] is None else float(noisy_se[j]))
        for j, m in enumerate(family)
    ]
    return AffinityReport(
        objective=objective.name,
        gamma=gamma,
        draws=draws,
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        r_squared=float(min(1.0, np.nan_to_num(fit.rvalue ** 2))),
        spearman_rho=float(rho),
        slope_se=slope_se,
        intercept_se=intercept_se,
        predicted_slope=2.0 * gamma - 1.0,
        predicted_intercept=_predicted_intercept(objective, gamma, pool),
        low_confidence=low_confidence,
        points=points,
    )


def dcg_affinity_check(family: Union[ScorerFamily, Sequence[FamilyMember]], ds: Dataset, k: int,
                       gamma: float, draws: int = 1000, queries_per_draw: int = 100, seed: int = 0,
                       n_jobs: int = 1) -> AffinityReport:
    """Affinity analysis of the DCG@k loss with its analytic intercept attached"""
    if k < 1:
        raise InputError("k must be a positive integer")
    return affinity_analysis(family, ds, f"dcg@{k}", gamma, draws, queries_per_draw, seed, n_jobs)


class CounterexampleRow(BaseModel):
    scale: float
    clean_risk: float
    noisy_risk: float


class CounterexampleReport(BaseModel):
    loss: str
    mode: ScoringMode
    gamma: float
    order_reversed: bool
    # the first scale a at which f_a beats the random scorer clean but loses noisy
    witness_scale: Optional[float] = None
    random_clean_risk: float
    random_noisy_risk: float
    rows: List[CounterexampleRow]


def counterexample_check(ds: Dataset, loss: Union[MarginLoss, str], gamma: float,
                         scale_grid: Sequence[float] = (1.0, 10.0, 100.0),
                         mode: ScoringMode = ScoringMode.pointwise, seed: int = 0,
                         noise_draws: int = 10) -> CounterexampleReport:
    """
    Compare f_a(x) = a * (P(Y=1|x) - 1/2) against a bounded random scorer.
    Noisy risks are averaged over `noise_draws` independent corruptions.
    """
    if not ds.has_oracle:
        raise InputError("The counterexample needs a synthetic dataset with an oracle")
    if not 0.5 < gamma <= 1.0:
        raise InputError("gamma must lie in (0.5, 1]")
    if noise_draws < 1:
        raise InputError("noise_draws must be at least 1")
    loss = losses.get_loss(loss)
    mode = ScoringMode(mode)

    noisy_sets = [corrupt_dataset(ds, NoiseSpec(gamma=gamma, seed=derive_seed(seed, "counterexample", i)))
                  for i in range(noise_draws)]

    def risks(scorer) -> Tuple[float, float]:
        clean = empirical_risk(scorer, ds, loss, mode, LabelSet.clean).value
        noisy = np.mean([empirical_risk(scorer, n, loss, mode, LabelSet.noisy).value for n in noisy_sets])
        return clean, float(noisy)

    random_clean, random_noisy = risks(BoundedRandomScorer(seed))
    rows, witness = [], None
    for a in scale_grid:
        clean, noisy = risks(OracleScorer(ds, scale=a))
        rows.append(CounterexampleRow(scale=float(a), clean_risk=clean, noisy_risk=noisy))
        if witness is None and clean < random_clean and noisy > random_noisy:
            witness = float(a)

    return CounterexampleReport(
        loss=loss.name, mode=mode, gamma=gamma, order_reversed=witness is not None, witness_scale=witness,
        random_clean_risk=random_clean, random_noisy_risk=random_noisy, rows=rows,
    )


def _check_bound_inputs(n: int, gamma: float) -> None:
    if n < 1:
        raise InputError("n must be at least 1")
    if not 0.5 < gamma <= 1.0:
        raise InputError("gamma must lie in (0.5, 1]")


def deviation_bound(n: int, epsilon: float, gamma: float, shatter_log: float,
                    optimization_slack: float = 0.0, failure_probability: float = 0.0) -> float:
    """
    P(L(f_n) - inf L > epsilon) <= delta_n + 8 S(F, n) exp(-n (epsilon(2g-1) - eps_n)^2 / 128),
    with S(F, n) = exp(shatter_log). eps_n = delta_n = 0 is exact ERM. Clamped to [0, 1].
    """
    _check_bound_inputs(n, gamma)
    if epsilon <= 0:
        raise InputError("epsilon must be positive")
    if optimization_slack < 0 or not 0.0 <= failure_probability <= 1.0:
        raise InputError("slack must be nonnegative and the failure probability in [0, 1]")

    margin = epsilon * (2.0 * gamma - 1.0) - optimization_slack
    if margin <= 0:
        return 1.0
    log_value = math.log(8.0) + shatter_log - n * margin ** 2 / 128.0
    return min(1.0, math.exp(min(log_value, 0.0)) + failure_probability)


def expected_excess_bound(n: int, gamma: float, shatter_log: float) -> float:
    """E[L(f_n)] - inf L <= 16 sqrt(log(8 e S(F, n)) / (2 n (2g-1)^2))"""
    _check_bound_inputs(n, gamma)
    return 16.0 * math.sqrt((math.log(8.0 * math.e) + shatter_log) / (2.0 * n * (2.0 * gamma - 1.0) ** 2))


def noisy_excess_threshold(epsilon: float, gamma: float) -> float:
    """Noisy-risk excess equivalent to a clean excess of epsilon for an order-preserving loss"""
    if not 0.5 < gamma <= 1.0:
        raise InputError("gamma must lie in (0.5, 1]")
    return epsilon * (2.0 * gamma - 1.0)


def debias_risk(noisy_risk: float, gamma: float, constant: float) -> float:
    """Clean risk implied by a noisy risk under the affine identity"""
    if not 0.5 < gamma <= 1.0:
        raise InputError("gamma must lie in (0.5, 1]")
    return (noisy_risk - constant * (1.0 - gamma)) / (2.0 * gamma - 1.0)
