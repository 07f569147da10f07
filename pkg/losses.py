"""
Margin based losses.

A loss maps a margin to a nonnegative real. Pointwise use feeds
alpha = f(x)(2y - 1); pairwise use feeds alpha = (f(x_i) - f(x_j))(2y_ij - 1)
for pairs with different labels only.
"""
import enum
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.special import expit

from errors import InputError, UnsupportedOperationError

ArrayLike = Union[float, np.ndarray, Iterable[float]]

# softplus switches to its linear asymptote beyond this argument
LOGISTIC_LINEAR_BRANCH = 30.0


class LossKind(str, enum.Enum):
    zero_one = "zero_one"
    hinge = "hinge"
    l1 = "l1"
    logistic = "logistic"
    exponential = "exponential"
    symmetrized_logistic = "symmetrized_logistic"


class ScoringMode(str, enum.Enum):
    pointwise = "pointwise"
    pairwise = "pairwise"


class MarginLoss(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: LossKind
    differentiable: bool
    # c in l(a) + l(-a) = c, only when the loss is label-symmetric
    symmetry_constant: Optional[float] = None
    # margins on which the symmetry holds; l1 margins in [-1, 1] are scores in [0, 1]
    domain: Tuple[float, float] = (-np.inf, np.inf)

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def label_symmetric(self) -> bool:
        return self.symmetry_constant is not None


LOSSES: Dict[LossKind, MarginLoss] = {
    LossKind.zero_one: MarginLoss(kind=LossKind.zero_one, differentiable=False, symmetry_constant=1.0),
    LossKind.hinge: MarginLoss(kind=LossKind.hinge, differentiable=True, symmetry_constant=2.0,
                               domain=(-1.0, 1.0)),
    LossKind.l1: MarginLoss(kind=LossKind.l1, differentiable=False, symmetry_constant=1.0,
                            domain=(-1.0, 1.0)),
    LossKind.logistic: MarginLoss(kind=LossKind.logistic, differentiable=True),
    LossKind.exponential: MarginLoss(kind=LossKind.exponential, differentiable=True),
    LossKind.symmetrized_logistic: MarginLoss(kind=LossKind.symmetrized_logistic, differentiable=True,
                                              symmetry_constant=1.0),
}


def get_loss(name: Union[str, LossKind, MarginLoss]) -> MarginLoss:
    if isinstance(name, MarginLoss):
        return name
    try:
        return LOSSES[LossKind(name)]
    except ValueError:
        known = ", ".join(k.value for k in LossKind)
        raise InputError(f"Unknown loss '{name}'. Known losses: {known}")


def _margins(alpha: ArrayLike) -> np.ndarray:
    a = np.asarray(alpha, dtype=float)
    if not np.all(np.isfinite(a)):
        raise InputError("Margins must be finite")
    return a


def _unwrap(result: np.ndarray, alpha: ArrayLike):
    return float(result) if np.ndim(alpha) == 0 else result


def _softplus(z: np.ndarray) -> np.ndarray:
    """log(1 + exp(z)) without overflow"""
    out = np.empty_like(z)
    big = z > LOGISTIC_LINEAR_BRANCH
    out[big] = z[big] + np.exp(-z[big])
    out[~big] = np.log1p(np.exp(z[~big]))
    return out


def evaluate(loss: Union[MarginLoss, str], alpha: ArrayLike):
    """Loss value at one margin or elementwise over an array of margins"""
    loss = get_loss(loss)
    a = _margins(alpha)
    flat = np.atleast_1d(a)
    kind = loss.kind
    if kind is LossKind.zero_one:
        out = (flat < 0).astype(float)
    elif kind is LossKind.hinge:
        out = np.maximum(0.0, 1.0 - flat)
    elif kind is LossKind.l1:
        # |y - f| for scores f in [0, 1] rewritten on margins a = (2f - 1)(2y - 1)
        out = np.abs(1.0 - flat) / 2.0
    elif kind is LossKind.logistic:
        out = _softplus(-flat)
    elif kind is LossKind.exponential:
        out = np.exp(-flat)
    else:
        out = expit(-flat)
    return _unwrap(out.reshape(a.shape), alpha)


def derivative(loss: Union[MarginLoss, str], alpha: ArrayLike):
    """d loss / d alpha; kinks take the zero subgradient"""
    loss = get_loss(loss)
    a = _margins(alpha)
    flat = np.atleast_1d(a)
    kind = loss.kind
    if kind is LossKind.zero_one:
        raise UnsupportedOperationError("The zero_one loss has no usable derivative")
    if kind is LossKind.hinge:
        out = np.where(flat < 1.0, -1.0, 0.0)
    elif kind is LossKind.l1:
        out = np.where(flat < 1.0, -0.5, np.where(flat > 1.0, 0.5, 0.0))
    elif kind is LossKind.logistic:
        out = -expit(-flat)
    elif kind is LossKind.exponential:
        out = -np.exp(-flat)
    else:
        out = -expit(flat) * expit(-flat)
    return _unwrap(out.reshape(a.shape), alpha)


class SymmetryReport(BaseModel):
    symmetric: bool
    constant: Optional[float] = None
    max_deviation: float
    margins_used: List[float]


def check_label_symmetry(loss: Union[MarginLoss, str], margins: Iterable[float],
                         tol: float = 1e-9) -> SymmetryReport:
    """
    Evaluate s(a) = l(a) + l(-a) at each margin and report whether it is constant.
    Margins outside the loss's validity domain are ignored.
    """
    loss = get_loss(loss)
    points = [float(p) for p in margins]
    if not points:
        raise InputError("At least one margin is required")
    if any(p == 0.0 for p in points):
        raise InputError("Margins must be nonzero")
    low, high = loss.domain
    points = [p for p in points if low <= p <= high and low <= -p <= high]
    if not points:
        raise InputError(f"No margin lies in the validity domain [{low}, {high}] of {loss.name}")

    a = np.asarray(points)
    sums = evaluate(loss, a) + evaluate(loss, -a)
    max_deviation = float(np.max(np.abs(sums - sums[0])))
    symmetric = max_deviation <= tol
    return SymmetryReport(
        symmetric=symmetric,
        constant=float(np.mean(sums)) if symmetric else None,
        max_deviation=max_deviation,
        margins_used=points,
    )


def pairwise_margin(score_i: float, score_j: float, y_i: int, y_j: int) -> Optional[float]:
    """Margin of a document pair, or None when the labels tie"""
    if y_i not in (0, 1) or y_j not in (0, 1):
        raise InputError("Labels must be 0 or 1")
    if not (np.isfinite(score_i) and np.isfinite(score_j)):
        raise InputError("Scores must be finite")
    if y_i == y_j:
        return None
    y_ij = (y_i - y_j + 1) / 2
    return float((score_i - score_j) * (2 * y_ij - 1))
