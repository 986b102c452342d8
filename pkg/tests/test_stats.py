import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from catbench.errors import MetricError
from catbench.stats import EffectSizeReport, bootstrap_ci, cohens_d, pooled_sd, welch_p

samples = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=30)


def _d_oracle(a, b):
    n1, n2 = len(a), len(b)
    v1 = sum((x - sum(a) / n1) ** 2 for x in a) / (n1 - 1)
    v2 = sum((x - sum(b) / n2) ** 2 for x in b) / (n2 - 1)
    sp = math.sqrt(((n1 - 1) * v1 + (n2 - 1) * v2) / (n1 + n2 - 2))
    return (sum(a) / n1 - sum(b) / n2) / sp


def test_cohens_d_oracle_and_welch():
    a = [5.1, 6.3, 7.2, 5.9, 6.8, 7.7, 6.1]
    b = [4.2, 5.0, 4.8, 5.5, 4.1, 5.2]
    r = cohens_d(a, b, n_resamples=200)
    assert r.d == pytest.approx(_d_oracle(a, b), abs=1e-12)
    assert r.p_value == pytest.approx(sps.ttest_ind(a, b, equal_var=False).pvalue, abs=1e-15)
    assert r.ci_low <= r.d <= r.ci_high
    assert (r.n1, r.n2) == (7, 6)
    assert EffectSizeReport.from_dict(r.to_dict()) == r


def _spread(xs):
    return max(xs) - min(xs) > 1e-6 * max(1.0, max(abs(x) for x in xs))


@given(samples, samples)
def test_cohens_d_antisymmetric(a, b):
    if not (_spread(a) or _spread(b)):
        return
    ab = cohens_d(a, b, n_resamples=20).d
    ba = cohens_d(b, a, n_resamples=20).d
    assert ab == pytest.approx(-ba, abs=1e-12)


@given(samples, samples, st.floats(0.01, 100), st.floats(-50, 50))
def test_cohens_d_scale_invariant(a, b, k, shift):
    if not (_spread(a) or _spread(b)):
        return
    base = cohens_d(a, b, n_resamples=20).d
    moved = cohens_d([k * x + shift for x in a], [k * x + shift for x in b], n_resamples=20).d
    assert moved == pytest.approx(base, rel=1e-12, abs=1e-12)


def test_cohens_d_degenerate():
    r = cohens_d([1.0, 1.0, 1.0], [1.0, 1.0])
    assert (r.d, r.p_value) == (0.0, 1.0)
    with pytest.raises(MetricError, match="zero-pooled-variance"):
        cohens_d([1.0, 1.0], [2.0, 2.0])


def test_pooled_sd():
    a, b = np.array([1.0, 2.0, 3.0]), np.array([2.0, 4.0])
    assert pooled_sd(a, b) == pytest.approx(math.sqrt((2.0 + 2.0) / 3.0))


def test_bootstrap_ci_deterministic_and_ordered():
    x = np.random.default_rng(3).normal(size=50)
    lo, hi = bootstrap_ci(x, seed=5)
    assert lo < x.mean() < hi
    assert bootstrap_ci(x, seed=5) == (lo, hi)
    mlo, mhi = bootstrap_ci(x, "median", seed=5)
    assert mlo <= float(np.median(x)) <= mhi
    with pytest.raises(MetricError, match="unknown-statistic"):
        bootstrap_ci(x, "mode")
    with pytest.raises(MetricError, match="invalid-level"):
        bootstrap_ci(x, level=1.0)


def test_bootstrap_resampling_matches_reference():
    # the compiled resampler equals a plain numpy loop on the same stream
    from catbench import rng as rngmod
    from catbench.stats import _resampled_means

    x = np.arange(10, dtype=float) ** 2
    got = _resampled_means(x, rngmod.stream(1, rngmod.BOOTSTRAP), 50)
    gen = rngmod.stream(1, rngmod.BOOTSTRAP)
    want = [x[gen.integers(0, x.size, x.size)].mean() for _ in range(50)]
    assert np.allclose(got, want, rtol=0, atol=1e-12)


def test_ratio_bootstrap():
    from catbench import rng as rngmod
    from catbench.stats import _resampled_ratios, bootstrap_ratio_ci

    gen = np.random.default_rng(4)
    den = gen.integers(1, 20, 80).astype(float)
    num = np.floor(den * gen.random(80))
    lo, hi = bootstrap_ratio_ci(num, den, seed=2)
    assert lo <= num.sum() / den.sum() <= hi
    got = _resampled_ratios(num, den, rngmod.stream(2, rngmod.BOOTSTRAP), 30)
    ref = rngmod.stream(2, rngmod.BOOTSTRAP)
    want = []
    for _ in range(30):
        idx = ref.integers(0, 80, 80)
        want.append(num[idx].sum() / den[idx].sum())
    assert np.allclose(got, want, rtol=0, atol=1e-12)
    with pytest.raises(MetricError, match="length-mismatch"):
        bootstrap_ratio_ci(num, den[:5])


@given(st.integers(2, 40), st.integers(2, 40), st.integers(0, 10**6))
def test_welch_p_matches_scipy(n1, n2, seed):
    g = np.random.default_rng(seed)
    a, b = g.normal(0.0, 1.0, n1), g.normal(0.3, 2.0, n2)
    assert welch_p(a, b) == pytest.approx(sps.ttest_ind(a, b, equal_var=False).pvalue, rel=1e-9, abs=1e-15)
