"""Closed-form alignment metrics.

All functions are pure; inputs are validated against the same invariants the
record types declare and violations raise :class:`MetricError`.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import SHARE_TOL
from .errors import MetricError


def _check_simplex(weights: Sequence[float], name: str) -> None:
    if any(not w > 0 for w in weights):
        raise MetricError("nonpositive-weight", f"{name} weights must be > 0")
    if abs(math.fsum(weights) - 1.0) > SHARE_TOL:
        raise MetricError("invalid-weight-sum", f"{name} weights sum to {math.fsum(weights)!r}")


def _check_unit(values: Sequence[float], name: str) -> None:
    if any(not 0.0 <= v <= 1.0 for v in values):
        raise MetricError("out-of-range", f"{name} values must lie in [0, 1]")


@dataclass(frozen=True)
class AlignmentRecord:
    """Paired task scores, goal scores and weights for one GAI evaluation."""

    task_scores: tuple[float, ...]
    goal_scores: tuple[float, ...]
    weights: tuple[float, ...]
    context_tag: str | None = None

    def __post_init__(self):
        if not (len(self.task_scores) == len(self.goal_scores) == len(self.weights)):
            raise MetricError("length-mismatch", "task, goal and weight sequences differ in length")
        if not self.weights:
            raise MetricError("empty-entries")
        _check_unit(self.task_scores, "task")
        _check_unit(self.goal_scores, "goal")
        _check_simplex(self.weights, "alignment")

    def to_dict(self) -> dict:
        return {
            "task_scores": list(self.task_scores),
            "goal_scores": list(self.goal_scores),
            "weights": list(self.weights),
            "context_tag": self.context_tag,
        }


@dataclass(frozen=True)
class ContextRule:
    """Multiply the weight at ``index`` by ``multiplier`` when ``tag`` is active."""

    tag: str
    index: int
    multiplier: float


def contextual_weights(
    weights: Sequence[float], context_tag: str | None, rules: Sequence[ContextRule]
) -> tuple[float, ...]:
    w = list(weights)
    for rule in rules:
        if rule.tag == context_tag:
            if not rule.multiplier > 0:
                raise MetricError("nonpositive-weight", "context multipliers must be > 0")
            w[rule.index] *= rule.multiplier
    total = math.fsum(w)
    return tuple(x / total for x in w)


def gai(record: AlignmentRecord, rules: Sequence[ContextRule] = ()) -> float:
    """Goal Achievement Index: ``sum(w*T*G) / sum(w*T)``."""
    w = contextual_weights(record.weights, record.context_tag, rules) if rules else record.weights
    den = math.fsum(wi * ti for wi, ti in zip(w, record.task_scores))
    if den == 0.0:
        raise MetricError("zero-denominator", "every task score is zero")
    num = math.fsum(wi * ti * gi for wi, ti, gi in zip(w, record.task_scores, record.goal_scores))
    return num / den


@dataclass(frozen=True)
class BaselineAssessment:
    metrics: tuple[float, ...]
    importance: tuple[float, ...]

    def __post_init__(self):
        if len(self.metrics) != len(self.importance):
            raise MetricError("length-mismatch", "metrics and importance differ in length")
        if not self.metrics:
            raise MetricError("empty-entries")
        _check_unit(self.metrics, "baseline")
        _check_simplex(self.importance, "importance")


def baseline_score(b: BaselineAssessment) -> float:
    num = math.fsum(v * p for v, p in zip(b.importance, b.metrics))
    return num / math.fsum(b.importance)


@dataclass(frozen=True)
class IntegrationInputs:
    quality: float
    cost_efficiency: float
    performance: float
    lambdas: tuple[float, float, float] = (0.5, 0.25, 0.25)

    def __post_init__(self):
        _check_unit((self.quality, self.cost_efficiency, self.performance), "integration")
        if len(self.lambdas) != 3 or any(lam < 0 for lam in self.lambdas):
            raise MetricError("invalid-lambdas", "need three non-negative lambdas")
        if abs(math.fsum(self.lambdas) - 1.0) > SHARE_TOL:
            raise MetricError("invalid-weight-sum", "lambdas must sum to 1")


def integration_score(x: IntegrationInputs) -> float:
    l1, l2, l3 = x.lambdas
    return l1 * x.quality + l2 * x.cost_efficiency + l3 * x.performance


def iqr(values: Sequence[float]) -> float:
    """Interquartile range with linear-interpolation (type 7) quantiles."""
    q1, q3 = np.quantile(np.asarray(values, dtype=float), [0.25, 0.75], method="linear")
    return float(q3 - q1)


def _iqr_exact(values: list[Fraction]) -> Fraction:
    xs = sorted(values)
    n = len(xs)

    def q(p: Fraction) -> Fraction:
        h = (n - 1) * p
        lo = math.floor(h)
        hi = min(lo + 1, n - 1)
        return xs[lo] + (h - lo) * (xs[hi] - xs[lo])

    return q(Fraction(3, 4)) - q(Fraction(1, 4))


def gar(actual: Sequence[float], predicted: Sequence[float]) -> float:
    """Goal Achievement Ratio ``IQR(actual - predicted) / IQR(actual)``; lower is better.

    Residual quantiles are taken in exact rational arithmetic, so shifting every
    prediction by a constant leaves the ratio bit-identical.
    """
    if len(actual) != len(predicted):
        raise MetricError("length-mismatch", "actual and predicted differ in length")
    if len(actual) < 4:
        raise MetricError("too-few-points", "need at least 4 observations")
    a = [Fraction(float(x)) for x in actual]
    spread = _iqr_exact(a)
    if spread == 0:
        raise MetricError("degenerate-actuals", "IQR of actual values is zero")
    residual = [x - Fraction(float(y)) for x, y in zip(a, predicted)]
    return float(_iqr_exact(residual) / spread)


def entropy(dist: Sequence[float]) -> float:
    """Shannon entropy in nats; zero-probability terms contribute nothing."""
    if any(p < 0 for p in dist) or abs(math.fsum(dist) - 1.0) > SHARE_TOL:
        raise MetricError("invalid-distribution", "pattern distribution must sum to 1")
    return -math.fsum(p * math.log(p) for p in dist if p > 0)


def f1(precision: float, recall: float) -> float:
    if precision + recall <= 0:
        raise MetricError("zero-precision-and-recall")
    return 2.0 * precision * recall / (precision + recall)


def modified_f1(precision: float, recall: float, pattern_dist: Sequence[float]) -> float:
    """F1 scaled by ``1 + H(p)``; exceeds 1 for rich pattern distributions."""
    _check_unit((precision, recall), "precision/recall")
    return f1(precision, recall) * (1.0 + entropy(pattern_dist))

