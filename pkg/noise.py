"""
Class-conditional label noise.

Each label is kept with probability gamma and flipped otherwise, independently
of the features given the true class. corrupt_labels only ever sees labels.
"""
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from data import Dataset
from errors import InputError
from seeding import MAX_SEED, Key, make_rng

logger = logging.getLogger(__name__)


class NoiseSpec(BaseModel):
    # a single gamma for every query; per-query noise levels are not supported
    model_config = ConfigDict(frozen=True, extra="forbid")

    gamma: float = Field(ge=0.0, le=1.0, description="probability of keeping the correct label")
    seed: int = Field(default=0, ge=0, le=MAX_SEED)


@dataclass(frozen=True, eq=False)
class NoisyLabels:
    noisy: np.ndarray
    flips: np.ndarray

    @property
    def flip_rate(self) -> float:
        return float(self.flips.mean()) if self.flips.size else 0.0


def corrupt_labels(labels, spec: NoiseSpec, stream: Optional[Key] = None) -> NoisyLabels:
    """
    Draw eps_i ~ Bernoulli(gamma) and return eps*y + (1 - eps)*(1 - y).
    `stream` selects an independent stream of the seed (the query id when
    corrupting a dataset) so results do not depend on processing order.
    """
    y = np.asarray(labels)
    if y.size and not np.all((y == 0) | (y == 1)):
        raise InputError("Labels must be binary (0 or 1) before noise is injected")
    y = y.astype(np.int8)

    rng = make_rng(spec.seed) if stream is None else make_rng(spec.seed, stream)
    keep = rng.random(y.shape) < spec.gamma
    noisy = np.where(keep, y, 1 - y).astype(np.int8)
    return NoisyLabels(noisy=noisy, flips=~keep)


def corrupt_dataset(ds: Dataset, spec: NoiseSpec) -> Dataset:
    """Corrupt the clean labels of every query, one stream per query id"""
    queries = []
    flipped = 0
    for q in ds.queries:
        result = corrupt_labels(q.labels, spec, stream=q.query_id)
        flipped += int(result.flips.sum())
        queries.append(replace(q, noisy_labels=result.noisy))
    logger.info("injected noise at gamma=%.3f: %d of %d labels flipped", spec.gamma, flipped, ds.num_documents)
    return ds.with_queries(queries)
