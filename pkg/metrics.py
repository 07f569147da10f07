"""
Ranking metrics, expressed as losses: every metric is negated so that smaller
is better. Per-query functions take a RankedQuery; the *_rows helpers take a
(num_scorers, num_docs) score matrix and evaluate all rows at once.
"""
import enum
import logging
import re
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np

from errors import InputError, MetricUndefinedError

logger = logging.getLogger(__name__)


class MetricKind(str, enum.Enum):
    auc = "auc"
    dcg = "dcg"
    ndcg = "ndcg"
    map = "map"


@dataclass(frozen=True)
class MetricName:
    kind: MetricKind
    k: Optional[int] = None

    def __str__(self) -> str:
        return f"{self.kind.value}@{self.k}" if self.k is not None else self.kind.value


_METRIC_PATTERN = re.compile(r"^(auc|map|dcg|ndcg)(?:@(\d+))?$")


def parse_metric_name(name: str) -> MetricName:
    """'ndcg@10' -> MetricName(ndcg, 10)"""
    match = _METRIC_PATTERN.match(name.strip().lower())
    if not match:
        raise InputError(f"Unknown metric '{name}'. Use auc, map, dcg@K or ndcg@K")
    kind = MetricKind(match.group(1))
    k = int(match.group(2)) if match.group(2) else None
    if kind in (MetricKind.dcg, MetricKind.ndcg):
        if k is None or k < 1:
            raise InputError(f"Metric '{name}' needs a positive cutoff, e.g. {kind.value}@10")
    elif k is not None:
        raise InputError(f"Metric '{kind.value}' takes no cutoff")
    return MetricName(kind, k)


def is_metric_name(name: str) -> bool:
    return _METRIC_PATTERN.match(name.strip().lower()) is not None


@dataclass(frozen=True, eq=False)
class RankedQuery:
    scores: np.ndarray
    labels: np.ndarray
    query_id: str = ""

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        labels = np.asarray(self.labels)
        if scores.ndim != 1 or scores.shape != labels.shape or scores.size == 0:
            raise InputError("scores and labels must be equal-length, nonempty vectors")
        if not np.all((labels == 0) | (labels == 1)):
            raise InputError(f"Query {self.query_id!r} has non-binary labels")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels.astype(int))


@dataclass(frozen=True)
class MetricValue:
    value: float
    queries_used: int
    queries_skipped: int


def discounts(n: int) -> np.ndarray:
    """D_i = log2(1 + i) for ranks i = 1..n"""
    return np.log2(np.arange(2, n + 2, dtype=float))


def ranking_order(scores: np.ndarray) -> np.ndarray:
    """Indices by descending score; ties keep ascending original index"""
    return np.argsort(-np.asarray(scores, dtype=float), axis=-1, kind="stable")


def _check_k(k: int) -> None:
    if k is None or k < 1:
        raise InputError("k must be a positive integer")


def _ranked_gains(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    order = ranking_order(scores)
    return np.asarray(labels, dtype=float)[order]


def dcg_rows(scores: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    _check_k(k)
    gains = _ranked_gains(scores, labels)
    cutoff = min(k, gains.shape[-1])
    return -(gains[..., :cutoff] / discounts(cutoff)).sum(axis=-1)


def max_dcg(labels: np.ndarray, k: int) -> float:
    """Ideal (positive) DCG@k of a label vector"""
    _check_k(k)
    relevant = int(np.sum(labels))
    cutoff = min(k, relevant)
    return float(np.sum(1.0 / discounts(cutoff))) if cutoff else 0.0


def ndcg_rows(scores: np.ndarray, labels: np.ndarray, k: int) -> Optional[np.ndarray]:
    ideal = max_dcg(labels, k)
    if ideal == 0.0:
        return None
    return dcg_rows(scores, labels, k) / ideal


def auc_rows(scores: np.ndarray, labels: np.ndarray) -> Optional[np.ndarray]:
    labels = np.asarray(labels)
    positive = labels == 1
    if positive.all() or not positive.any():
        return None
    s = np.asarray(scores, dtype=float)
    s_pos = s[..., positive][..., :, None]
    s_neg = s[..., ~positive][..., None, :]
    correct = (s_pos > s_neg).sum(axis=(-2, -1))
    ties = (s_pos == s_neg).sum(axis=(-2, -1))
    pairs = positive.sum() * (~positive).sum()
    return -(correct + 0.5 * ties) / pairs


def map_rows(scores: np.ndarray, labels: np.ndarray) -> Optional[np.ndarray]:
    relevant = int(np.sum(labels))
    if relevant == 0:
        return None
    gains = _ranked_gains(scores, labels)
    ranks = np.arange(1, gains.shape[-1] + 1, dtype=float)
    precision = np.cumsum(gains, axis=-1) / ranks
    return -(precision * gains).sum(axis=-1) / relevant


def dcg_at_k(q: RankedQuery, k: int) -> float:
    return float(dcg_rows(q.scores, q.labels, k))


def ndcg_at_k(q: RankedQuery, k: int) -> Optional[float]:
    _check_k(k)
    value = ndcg_rows(q.scores, q.labels, k)
    return None if value is None else float(value)


def auc(q: RankedQuery) -> Optional[float]:
    value = auc_rows(q.scores, q.labels)
    return None if value is None else float(value)


def map(q: RankedQuery) -> Optional[float]:  # noqa: A001 - metric name
    value = map_rows(q.scores, q.labels)
    return None if value is None else float(value)


def metric_rows(scores: np.ndarray, labels: np.ndarray, metric: MetricName) -> Optional[np.ndarray]:
    """Evaluate one metric for every row of a score matrix; None if undefined"""
    if metric.kind is MetricKind.dcg:
        return dcg_rows(scores, labels, metric.k)
    if metric.kind is MetricKind.ndcg:
        return ndcg_rows(scores, labels, metric.k)
    if metric.kind is MetricKind.auc:
        return auc_rows(scores, labels)
    return map_rows(scores, labels)


def query_metric(q: RankedQuery, metric: MetricName) -> Optional[float]:
    value = metric_rows(q.scores, q.labels, metric)
    return None if value is None else float(value)


def mean_metric(queries: Sequence[RankedQuery], metric, k: Optional[int] = None) -> MetricValue:
    """Average a metric over the queries where it is defined"""
    if not queries:
        raise InputError("At least one query is required")
    if isinstance(metric, str):
        metric = parse_metric_name(f"{metric}@{k}" if k is not None and "@" not in metric else metric)
    elif isinstance(metric, MetricKind):
        metric = parse_metric_name(f"{metric.value}@{k}" if k is not None else metric.value)

    values: List[float] = []
    for q in queries:
        value = query_metric(q, metric)
        if value is not None:
            values.append(value)
    skipped = len(queries) - len(values)
    if not values:
        raise MetricUndefinedError(f"metric undefined on all queries ({metric})")
    if skipped:
        logger.debug("%s skipped %d of %d queries", metric, skipped, len(queries))
    return MetricValue(value=float(np.mean(values)), queries_used=len(values), queries_skipped=skipped)


def ranked_queries(pairs: Iterable) -> List[RankedQuery]:
    """Build RankedQuery objects from (query_id, scores, labels) triples"""
    return [RankedQuery(scores=s, labels=y, query_id=str(qid)) for qid, s, y in pairs]
