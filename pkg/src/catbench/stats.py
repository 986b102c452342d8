"""Effect sizes, Welch tests and percentile-bootstrap intervals."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from numba import njit
from scipy import stats as sps

from . import rng as rngmod
from .errors import MetricError

DEFAULT_RESAMPLES = 1000


@dataclass(frozen=True)
class EffectSizeReport:
    mu_cat: float
    mu_baseline: float
    sigma_pooled: float
    d: float
    p_value: float
    ci_low: float
    ci_high: float
    n1: int
    n2: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> EffectSizeReport:
        return cls(**d)


@njit(cache=True)
def _resampled_means(x, gen, n_resamples):
    n = x.shape[0]
    out = np.empty(n_resamples)
    for b in range(n_resamples):
        idx = gen.integers(0, n, n)
        s = 0.0
        for j in range(n):
            s += x[idx[j]]
        out[b] = s / n
    return out


@njit(cache=True)
def _resampled_medians(x, gen, n_resamples):
    n = x.shape[0]
    out = np.empty(n_resamples)
    buf = np.empty(n)
    for b in range(n_resamples):
        idx = gen.integers(0, n, n)
        for j in range(n):
            buf[j] = x[idx[j]]
        out[b] = np.median(buf)
    return out


@njit(cache=True)
def _resampled_ratios(num, den, gen, n_resamples):
    n = num.shape[0]
    out = np.empty(n_resamples)
    for b in range(n_resamples):
        idx = gen.integers(0, n, n)
        sn = 0.0
        sd = 0.0
        for j in range(n):
            sn += num[idx[j]]
            sd += den[idx[j]]
        out[b] = sn / sd if sd > 0 else 0.0
    return out


@njit(cache=True)
def _resampled_d(a, b, gen, n_resamples):
    n1 = a.shape[0]
    n2 = b.shape[0]
    out = np.empty(n_resamples)
    for r in range(n_resamples):
        ia = gen.integers(0, n1, n1)
        ib = gen.integers(0, n2, n2)
        sa = 0.0
        for j in range(n1):
            sa += a[ia[j]]
        sb = 0.0
        for j in range(n2):
            sb += b[ib[j]]
        ma = sa / n1
        mb = sb / n2
        va = 0.0
        for j in range(n1):
            va += (a[ia[j]] - ma) ** 2
        vb = 0.0
        for j in range(n2):
            vb += (b[ib[j]] - mb) ** 2
        pooled = math.sqrt((va + vb) / (n1 + n2 - 2))
        out[r] = (ma - mb) / pooled if pooled > 0 else 0.0
    return out


def _as_sample(x: Sequence[float], name: str) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise MetricError("too-few-points", f"{name} needs at least 2 observations")
    if not np.all(np.isfinite(arr)):
        raise MetricError("non-finite", f"{name} contains non-finite values")
    return arr


def _percentile_interval(values: np.ndarray, level: float) -> tuple[float, float]:
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(values, [tail, 1.0 - tail], method="linear")
    return float(lo), float(hi)


def bootstrap_ci(
    sample: Sequence[float],
    statistic: str = "mean",
    level: float = 0.95,
    seed: int = 0,
    n_resamples: int = DEFAULT_RESAMPLES,
) -> tuple[float, float]:
    """Percentile bootstrap interval for the sample mean or median."""
    if not 0.0 < level < 1.0:
        raise MetricError("invalid-level", "level must lie in (0, 1)")
    x = _as_sample(sample, "sample")
    gen = rngmod.stream(seed, rngmod.BOOTSTRAP)
    if statistic == "mean":
        boots = _resampled_means(x, gen, n_resamples)
    elif statistic == "median":
        boots = _resampled_medians(x, gen, n_resamples)
    else:
        raise MetricError("unknown-statistic", f"{statistic!r} is not mean or median")
    return _percentile_interval(boots, level)


def bootstrap_ratio_ci(
    numerator: Sequence[float],
    denominator: Sequence[float],
    level: float = 0.95,
    seed: int = 0,
    n_resamples: int = DEFAULT_RESAMPLES,
) -> tuple[float, float]:
    """Percentile interval for ``sum(num) / sum(den)``, resampling whole units (users)."""
    if not 0.0 < level < 1.0:
        raise MetricError("invalid-level", "level must lie in (0, 1)")
    num = _as_sample(numerator, "numerator")
    den = _as_sample(denominator, "denominator")
    if num.size != den.size:
        raise MetricError("length-mismatch", "numerator and denominator differ in length")
    gen = rngmod.stream(seed, rngmod.BOOTSTRAP)
    return _percentile_interval(_resampled_ratios(num, den, gen, n_resamples), level)


def pooled_sd(a: np.ndarray, b: np.ndarray) -> float:
    n1, n2 = a.size, b.size
    ss = ((a - a.mean()) ** 2).sum() + ((b - b.mean()) ** 2).sum()
    return math.sqrt(ss / (n1 + n2 - 2))


def welch_p(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided Welch t-test p-value with Welch-Satterthwaite degrees of freedom."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    se2 = va + vb
    if not se2 > 0:
        return 1.0
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    df = se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    return float(min(1.0, 2.0 * sps.t.sf(abs(t), df)))


def cohens_d(
    sample_a: Sequence[float],
    sample_b: Sequence[float],
    *,
    level: float = 0.95,
    seed: int = 0,
    n_resamples: int = DEFAULT_RESAMPLES,
) -> EffectSizeReport:
    """Standardized mean difference of ``a`` over ``b``.

    The p-value comes from Welch's test; the interval is a percentile bootstrap
    of ``d`` resampling each sample independently.
    """
    a = _as_sample(sample_a, "sample_a")
    b = _as_sample(sample_b, "sample_b")
    sigma = pooled_sd(a, b)
    mu_a, mu_b = float(a.mean()), float(b.mean())
    if sigma == 0.0:
        if mu_a == mu_b:
            # identical constant arms: no effect, nothing to test
            return EffectSizeReport(mu_a, mu_b, 0.0, 0.0, 1.0, 0.0, 0.0, a.size, b.size)
        raise MetricError("zero-pooled-variance", "both samples are constant and differ")
    d = (mu_a - mu_b) / sigma
    p = welch_p(a, b)
    gen = rngmod.stream(seed, rngmod.BOOTSTRAP)
    lo, hi = _percentile_interval(_resampled_d(a, b, gen, n_resamples), level)
    return EffectSizeReport(mu_a, mu_b, sigma, d, p, min(lo, d), max(hi, d), a.size, b.size)
