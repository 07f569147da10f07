"""
Learning-to-rank datasets: per-query feature matrices with binary relevance
labels, a synthetic generator, and LETOR / SVMLight text input and output.

LETOR line format:
    <label> qid:<id> <idx>:<val> ... [#comment]
with 1-based ascending feature indices. Missing indices read as 0.
"""
import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import expit, logit
from sklearn.preprocessing import MinMaxScaler, StandardScaler

from errors import InputError, LetorParseError
from seeding import MAX_SEED, make_rng

logger = logging.getLogger(__name__)


class Provenance(str, enum.Enum):
    synthetic = "synthetic"
    letor_file = "letor_file"


class NormalizationMode(str, enum.Enum):
    per_query_min_max = "per_query_min_max"
    global_standardize = "global_standardize"


class LabelSet(str, enum.Enum):
    clean = "clean"
    noisy = "noisy"


@dataclass(frozen=True, eq=False)
class OracleParams:
    """P(Y=1 | x) = sigmoid(<theta, x> + bias) for one query"""
    theta: np.ndarray
    bias: float = 0.0

    def probability(self, features: np.ndarray) -> np.ndarray:
        return expit(features @ self.theta + self.bias)


@dataclass(frozen=True, eq=False)
class QueryGroup:
    query_id: str
    features: np.ndarray
    labels: np.ndarray
    # labels as observed after noise injection; equal to labels until corrupted
    noisy_labels: Optional[np.ndarray] = None
    doc_ids: Tuple[Optional[str], ...] = ()

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels).astype(int)
        if features.ndim != 2 or features.shape[0] == 0:
            raise InputError(f"Query {self.query_id!r} must contain at least one document")
        if labels.shape != (features.shape[0],):
            raise InputError(f"Query {self.query_id!r}: one label per document is required")
        noisy = labels.copy() if self.noisy_labels is None else np.asarray(self.noisy_labels).astype(int)
        if noisy.shape != labels.shape:
            raise InputError(f"Query {self.query_id!r}: noisy labels do not match the documents")
        doc_ids = tuple(self.doc_ids) if self.doc_ids else (None,) * labels.size
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "noisy_labels", noisy)
        object.__setattr__(self, "doc_ids", doc_ids)

    @property
    def size(self) -> int:
        return int(self.labels.size)

    def labels_for(self, which: LabelSet) -> np.ndarray:
        return self.noisy_labels if LabelSet(which) is LabelSet.noisy else self.labels

    def has_mixed_labels(self, which: LabelSet = LabelSet.clean) -> bool:
        y = self.labels_for(which)
        return bool(y.min() != y.max())


@dataclass(frozen=True, eq=False)
class Dataset:
    queries: Tuple[QueryGroup, ...]
    feature_dim: int
    provenance: Provenance = Provenance.synthetic
    # per-query oracle parameters, synthetic data only
    oracle: Optional[Dict[str, OracleParams]] = field(default=None, compare=False)

    def __post_init__(self):
        queries = tuple(self.queries)
        if not queries:
            raise InputError("A dataset needs at least one query")
        for q in queries:
            if q.features.shape[1] != self.feature_dim:
                raise InputError(
                    f"Query {q.query_id!r} has {q.features.shape[1]} features, expected {self.feature_dim}"
                )
        object.__setattr__(self, "queries", queries)

    def __len__(self) -> int:
        return len(self.queries)

    @property
    def num_documents(self) -> int:
        return sum(q.size for q in self.queries)

    @property
    def query_ids(self) -> List[str]:
        return [q.query_id for q in self.queries]

    @property
    def has_oracle(self) -> bool:
        return self.oracle is not None

    def oracle_for(self, query_id: str) -> OracleParams:
        if self.oracle is None:
            raise InputError("This dataset carries no oracle (only synthetic datasets do)")
        return self.oracle[query_id]

    def with_queries(self, queries: Sequence[QueryGroup]) -> "Dataset":
        oracle = None
        if self.oracle is not None:
            oracle = {q.query_id: self.oracle[q.query_id] for q in queries}
        return Dataset(tuple(queries), self.feature_dim, self.provenance, oracle)

    def labels(self, which: LabelSet = LabelSet.clean) -> np.ndarray:
        return np.concatenate([q.labels_for(which) for q in self.queries])

    def stacked_features(self) -> np.ndarray:
        return np.vstack([q.features for q in self.queries])


class SyntheticSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    num_queries: int = Field(default=50, ge=1)
    docs_per_query: int = Field(default=10, ge=1)
    feature_dim: int = Field(default=5, ge=1)
    # when given, num_queries is derived as total_samples // docs_per_query
    total_samples: Optional[int] = Field(default=None, ge=1)
    seed: int = Field(default=0, ge=0, le=MAX_SEED)
    label_mode: Literal["bernoulli", "threshold"] = "bernoulli"
    theta_mode: Literal["per_query", "shared"] = "per_query"
    prevalence_range: Optional[Tuple[float, float]] = None

    @model_validator(mode="after")
    def _derive_queries(self):
        if self.total_samples is not None:
            if self.total_samples < self.docs_per_query:
                raise ValueError("total_samples must be at least docs_per_query")
            self.num_queries = self.total_samples // self.docs_per_query
        if self.prevalence_range is not None:
            low, high = self.prevalence_range
            if not 0.0 < low <= high < 1.0:
                raise ValueError("prevalence_range must satisfy 0 < low <= high < 1")
        return self


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """
    theta_q ~ N(0, I_d), x ~ N(0, I_d), y ~ Bernoulli(sigmoid(<theta_q, x> + b_q)).
    b_q is 0 unless a prevalence range tilts each query.
    """
    d = spec.feature_dim
    shared_theta = make_rng(spec.seed, "theta").standard_normal(d) if spec.theta_mode == "shared" else None

    queries: List[QueryGroup] = []
    oracle: Dict[str, OracleParams] = {}
    for index in range(spec.num_queries):
        qid = str(index)
        rng = make_rng(spec.seed, "query", index)
        theta = shared_theta if shared_theta is not None else rng.standard_normal(d)
        bias = 0.0
        if spec.prevalence_range is not None:
            bias = float(logit(rng.uniform(*spec.prevalence_range)))
        params = OracleParams(theta=theta, bias=bias)

        x = rng.standard_normal((spec.docs_per_query, d))
        draws = rng.random(spec.docs_per_query)
        if spec.label_mode == "threshold":
            y = (x @ theta + bias > 0).astype(int)
        else:
            y = (draws < params.probability(x)).astype(int)

        queries.append(QueryGroup(query_id=qid, features=x, labels=y))
        oracle[qid] = params

    logger.debug("generated %d synthetic queries (seed %d)", len(queries), spec.seed)
    return Dataset(tuple(queries), d, Provenance.synthetic, oracle)


def _parse_line(line: str, line_number: int):
    body, _, comment = line.partition("#")
    tokens = body.split()
    if len(tokens) < 2:
        raise LetorParseError(line_number, "expected '<label> qid:<id> ...'")
    try:
        label = int(tokens[0])
    except ValueError:
        raise LetorParseError(line_number, f"label {tokens[0]!r} is not an integer")
    if label < 0:
        raise LetorParseError(line_number, "labels must be nonnegative")
    if not tokens[1].startswith("qid:") or len(tokens[1]) == 4:
        raise LetorParseError(line_number, f"malformed query token {tokens[1]!r}")
    qid = tokens[1][4:]

    features: Dict[int, float] = {}
    previous = 0
    for token in tokens[2:]:
        index_text, sep, value_text = token.partition(":")
        try:
            index = int(index_text)
            value = float(value_text)
        except ValueError:
            raise LetorParseError(line_number, f"malformed feature {token!r}")
        if not sep or index < 1:
            raise LetorParseError(line_number, f"malformed feature {token!r}")
        if index <= previous:
            raise LetorParseError(line_number, "feature indices must be ascending")
        features[index] = value
        previous = index
    doc_id = comment.strip() or None
    return qid, label, features, doc_id


def parse_letor(path) -> Dataset:
    """Read a LETOR / SVMLight file; labels stay raw integers until binarize()"""
    grouped: Dict[str, List[Tuple[int, Dict[int, float], Optional[str]]]] = {}
    max_index = 0
    with open(path, encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            qid, label, features, doc_id = _parse_line(line, line_number)
            if features:
                max_index = max(max_index, max(features))
            grouped.setdefault(qid, []).append((label, features, doc_id))

    if not grouped:
        raise InputError(f"{path}: no documents found")

    queries = []
    for qid, rows in grouped.items():
        x = np.zeros((len(rows), max_index))
        for i, (_, features, _) in enumerate(rows):
            for index, value in features.items():
                x[i, index - 1] = value
        labels = np.array([label for label, _, _ in rows], dtype=int)
        queries.append(QueryGroup(qid, x, labels, doc_ids=tuple(doc_id for _, _, doc_id in rows)))

    logger.info("parsed %s: %d queries, %d features", path, len(queries), max_index)
    return Dataset(tuple(queries), max_index, Provenance.letor_file)


def write_letor(ds: Dataset, path, labels: LabelSet = LabelSet.clean) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for q in ds.queries:
            y = q.labels_for(labels)
            for i in range(q.size):
                features = " ".join(f"{j + 1}:{float(v)!r}" for j, v in enumerate(q.features[i]))
                line = f"{int(y[i])} qid:{q.query_id} {features}"
                if q.doc_ids[i]:
                    line += f" #{q.doc_ids[i]}"
                f.write(line + "\n")


def binarize(ds: Dataset, threshold: int = 1) -> Dataset:
    """label <- 1 if raw >= threshold else 0 (applied to clean and noisy labels)"""
    queries = []
    for q in ds.queries:
        if np.any(q.labels < 0):
            raise InputError(f"Query {q.query_id!r} has negative labels")
        queries.append(replace(q, labels=(q.labels >= threshold).astype(int),
                               noisy_labels=(q.noisy_labels >= threshold).astype(int)))
    return ds.with_queries(queries)


class FeatureNormalizer:
    """Normalization statistics fitted on a training split"""

    def __init__(self, mode: NormalizationMode, scaler: Optional[StandardScaler] = None):
        self.mode = NormalizationMode(mode)
        self.scaler = scaler

    def transform(self, ds: Dataset) -> Dataset:
        queries = []
        for q in ds.queries:
            if self.mode is NormalizationMode.per_query_min_max:
                features = MinMaxScaler().fit_transform(q.features)
            else:
                features = self.scaler.transform(q.features)
            queries.append(replace(q, features=features))
        # features moved, the oracle no longer describes them
        return Dataset(tuple(queries), ds.feature_dim, ds.provenance, None)


def fit_normalizer(ds: Dataset, mode: NormalizationMode) -> FeatureNormalizer:
    mode = NormalizationMode(mode)
    if mode is NormalizationMode.global_standardize:
        return FeatureNormalizer(mode, StandardScaler().fit(ds.stacked_features()))
    return FeatureNormalizer(mode)


class NormalizerFile(BaseModel):
    """On-disk form of a fitted FeatureNormalizer"""
    model_config = ConfigDict(extra="forbid")

    mode: NormalizationMode
    mean: Optional[List[float]] = None
    scale: Optional[List[float]] = None


def save_normalizer(normalizer: FeatureNormalizer, path) -> None:
    record = NormalizerFile(mode=normalizer.mode)
    if normalizer.scaler is not None:
        record.mean = [float(v) for v in normalizer.scaler.mean_]
        record.scale = [float(v) for v in normalizer.scaler.scale_]
    with open(path, "w", encoding="utf-8") as f:
        f.write(record.model_dump_json(indent=2))


def load_normalizer(path) -> FeatureNormalizer:
    try:
        with open(path, encoding="utf-8") as f:
            record = NormalizerFile.model_validate_json(f.read())
    except ValueError as e:
        raise InputError(f"Invalid normalizer file {path}: {e}")
    if record.mode is NormalizationMode.per_query_min_max:
        return FeatureNormalizer(record.mode)
    if record.mean is None or record.scale is None or len(record.mean) != len(record.scale):
        raise InputError(f"Normalizer file {path} lacks matching mean and scale vectors")
    scaler = StandardScaler()
    scaler.mean_ = np.asarray(record.mean)
    scaler.scale_ = np.asarray(record.scale)
    scaler.var_ = scaler.scale_ ** 2
    scaler.n_features_in_ = scaler.mean_.size
    scaler.n_samples_seen_ = 0
    return FeatureNormalizer(record.mode, scaler)


def normalize_features(ds: Dataset, mode: NormalizationMode,
                       normalizer: Optional[FeatureNormalizer] = None) -> Dataset:
    """Normalize with statistics from `normalizer` (fitted on ds when omitted)"""
    mode = NormalizationMode(mode)
    if normalizer is None:
        normalizer = fit_normalizer(ds, mode)
    elif normalizer.mode is not mode:
        raise InputError(f"Normalizer was fitted for {normalizer.mode.value}, not {mode.value}")
    return normalizer.transform(ds)


def split(ds: Dataset, train_frac: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Split whole queries into (train, holdout); holdout size is floor(n * (1 - train_frac))"""
    if not 0.0 < train_frac < 1.0:
        raise InputError("train_frac must lie strictly between 0 and 1")
    n = len(ds)
    n_holdout = math.floor(n * (1.0 - train_frac) + 1e-9)
    if n_holdout == 0 or n_holdout == n:
        raise InputError(f"Splitting {n} queries at {train_frac} leaves one side empty")

    permutation = make_rng(seed, "split").permutation(n)
    holdout_index = set(int(i) for i in permutation[:n_holdout])
    train = [q for i, q in enumerate(ds.queries) if i not in holdout_index]
    holdout = [q for i, q in enumerate(ds.queries) if i in holdout_index]
    return ds.with_queries(train), ds.with_queries(holdout)
