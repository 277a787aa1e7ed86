import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats

from indagg.errors import DegenerateSampleError, InsufficientDataError, InvalidWidthError
from indagg.stattests import (TestKind, f_test_variance, kolmogorov_smirnov_2, mann_whitney_u,
                              moving_average, rankdata, run_test, u_null_counts)


def brute_force_u_pvalue(x, y):
    """Enumerate every assignment of the pooled ranks to the two samples."""
    pooled = sorted(list(x) + list(y))
    n1 = len(x)
    u_obs = sum(1 for a in x for b in y if a > b)
    us = []
    for idx in itertools.combinations(range(len(pooled)), n1):
        xs = [pooled[i] for i in idx]
        ys = [pooled[i] for i in range(len(pooled)) if i not in idx]
        us.append(sum(1 for a in xs for b in ys if a > b))
    us = np.array(us)
    lower = np.mean(us <= u_obs)
    upper = np.mean(us >= u_obs)
    return min(1.0, 2 * min(lower, upper)), u_obs


# ------------------------------------------------------------------ U test

def test_u_disjoint_pair_example():
    res = mann_whitney_u([1, 2], [3, 4])
    assert res.statistic == 0
    assert res.p_value == pytest.approx(1 / 3, abs=1e-15)


def test_u_identical_samples():
    res = mann_whitney_u([1, 2, 3, 4], [1, 2, 3, 4])
    assert res.statistic == 8
    assert res.p_value >= 0.99


def test_u_detects_large_shift(rng):
    res = mann_whitney_u(rng.normal(0, 1, 30), rng.normal(3, 1, 30))
    assert res.p_value < 0.001


def test_u_exact_matches_brute_force_small(rng):
    for n1 in range(2, 7):
        for n2 in range(2, 7):
            for _ in range(4):
                x, y = rng.normal(size=n1), rng.normal(size=n2)
                expected, u = brute_force_u_pvalue(x, y)
                res = mann_whitney_u(x, y)
                assert res.statistic == u
                assert abs(res.p_value - expected) <= 1e-9


def test_u_exact_agrees_with_scipy_exact(rng):
    for _ in range(50):
        x, y = rng.normal(size=5), rng.normal(size=7)
        ref = stats.mannwhitneyu(x, y, alternative="two-sided", method="exact")
        assert mann_whitney_u(x, y).p_value == pytest.approx(ref.pvalue, abs=1e-12)


def test_u_null_counts_sum_to_binomial():
    for n1, n2 in [(1, 1), (3, 4), (6, 6)]:
        counts = u_null_counts(n1, n2)
        assert sum(counts) == math.comb(n1 + n2, n1)
        assert counts == counts[::-1]


def test_u_normal_approximation_matches_scipy_with_ties(rng):
    for _ in range(30):
        x = rng.integers(0, 6, size=20).astype(float)
        y = rng.integers(1, 7, size=25).astype(float)
        ref = stats.mannwhitneyu(x, y, alternative="two-sided", method="asymptotic", use_continuity=True)
        res = mann_whitney_u(x, y)
        assert res.statistic == ref.statistic
        assert res.p_value == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-15)


def test_u_exact_threshold_is_configurable(rng):
    x, y = rng.normal(size=5), rng.normal(size=5)
    exact = mann_whitney_u(x, y)
    approx = mann_whitney_u(x, y, exact_threshold=0)
    assert exact.statistic == approx.statistic
    assert exact.p_value != approx.p_value


def test_rankdata_averages_ties():
    assert rankdata([10, 20, 20, 30]).tolist() == [1.0, 2.5, 2.5, 4.0]
    assert np.allclose(rankdata([3, 1, 2, 2, 5]), stats.rankdata([3, 1, 2, 2, 5]))


# ----------------------------------------------------------------- KS test

def test_ks_examples():
    assert kolmogorov_smirnov_2([1, 3], [2, 4]).statistic == 0.5
    same = kolmogorov_smirnov_2([1, 2, 3], [1, 2, 3])
    assert same.statistic == 0.0 and same.p_value == 1.0
    assert kolmogorov_smirnov_2([1, 2, 3], [4, 5, 6, 7]).statistic == 1.0


def test_ks_matches_scipy_statistic_and_asymptotic_law(rng):
    for n1, n2 in [(30, 30), (50, 50), (17, 43)]:
        x = rng.normal(size=n1)
        y = rng.normal(0.3, 1.2, size=n2)
        res = kolmogorov_smirnov_2(x, y)
        assert res.statistic == pytest.approx(stats.ks_2samp(x, y).statistic, abs=1e-15)
        lam = math.sqrt(n1 * n2 / (n1 + n2)) * res.statistic
        assert res.p_value == pytest.approx(special.kolmogorov(lam), abs=1e-10)


def test_ks_with_ties_uses_pooled_points():
    x = [1, 1, 2, 2, 3]
    y = [1, 2, 2, 3, 3]
    assert kolmogorov_smirnov_2(x, y).statistic == pytest.approx(stats.ks_2samp(x, y, method="asymp").statistic)


# ------------------------------------------------------------------ F test

def test_f_identical_samples():
    res = f_test_variance([1.0, 2.0, 4.0], [1.0, 2.0, 4.0])
    assert res.statistic == 1.0 and res.p_value == pytest.approx(1.0, abs=1e-12)


def test_f_quadruple_variance_is_significant(rng):
    y = rng.normal(size=51)
    y = (y - y.mean()) / y.std(ddof=1)
    x = 2 * y[::-1]
    res = f_test_variance(x, y)
    assert res.statistic == pytest.approx(4.0)
    ref = 2 * stats.f.sf(4.0, 50, 50)
    assert res.p_value == pytest.approx(ref, rel=1e-9)
    assert res.p_value < 0.01


def test_f_matches_two_sided_scipy(rng):
    for _ in range(30):
        x, y = rng.normal(size=20), rng.normal(scale=1.5, size=35)
        f = np.var(x, ddof=1) / np.var(y, ddof=1)
        ref = 2 * min(stats.f.cdf(f, 19, 34), stats.f.sf(f, 19, 34))
        assert f_test_variance(x, y).p_value == pytest.approx(ref, rel=1e-9)


def test_f_zero_variance_raises():
    with pytest.raises(DegenerateSampleError):
        f_test_variance([1.0, 1.0, 1.0], [1.0, 2.0])


def test_f_null_calibration_at_five_percent():
    rng = np.random.default_rng(5)
    rejections = sum(f_test_variance(rng.normal(size=20), rng.normal(size=20)).p_value < 0.05
                     for _ in range(10_000))
    assert abs(rejections / 10_000 - 0.05) <= 0.01


@pytest.mark.parametrize("fn", [mann_whitney_u, kolmogorov_smirnov_2, f_test_variance])
def test_small_samples_rejected(fn):
    with pytest.raises(InsufficientDataError):
        fn([1.0], [1.0, 2.0])


# ------------------------------------------------------------- properties

samples = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=25)


@settings(max_examples=150, deadline=None)
@given(samples, samples)
def test_swapping_samples_keeps_p_value(x, y):
    u1, u2 = mann_whitney_u(x, y), mann_whitney_u(y, x)
    assert u1.p_value == pytest.approx(u2.p_value, abs=1e-12)
    assert u1.statistic + u2.statistic == pytest.approx(len(x) * len(y))
    assert kolmogorov_smirnov_2(x, y).p_value == pytest.approx(kolmogorov_smirnov_2(y, x).p_value, abs=1e-12)
    if np.var(x) > 0 and np.var(y) > 0:
        f1, f2 = f_test_variance(x, y), f_test_variance(y, x)
        assert f1.statistic * f2.statistic == pytest.approx(1.0)
        assert f1.p_value == pytest.approx(f2.p_value, rel=1e-8, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(samples, samples)
def test_rank_tests_invariant_under_monotone_transform(x, y):
    tx = np.arctan(np.asarray(x) / 100.0)
    ty = np.arctan(np.asarray(y) / 100.0)
    # arctan is strictly increasing but may merge values that differ in the last ulp
    if len(np.unique(np.r_[x, y])) != len(np.unique(np.r_[tx, ty])):
        return
    assert mann_whitney_u(x, y).p_value == pytest.approx(mann_whitney_u(tx, ty).p_value, abs=1e-12)
    assert kolmogorov_smirnov_2(x, y).p_value == pytest.approx(kolmogorov_smirnov_2(tx, ty).p_value, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(samples, samples)
def test_p_values_in_unit_interval(x, y):
    for kind in TestKind:
        try:
            p = run_test(kind, x, y).p_value
        except DegenerateSampleError:
            continue
        assert 0.0 <= p <= 1.0


# --------------------------------------------------------------- smoothing

def test_moving_average_examples():
    assert moving_average([1, 2, 3, 4, 5], 5).tolist() == [3.0]
    const = moving_average(np.full(12, 2.5), 5)
    assert const.size == 8 and np.all(const == 2.5)
    with pytest.raises(InvalidWidthError):
        moving_average([1, 2, 3], 5)
    with pytest.raises(InvalidWidthError):
        moving_average([1, 2, 3], 0)


def test_moving_average_matches_convolution_and_shrinks_variance(rng):
    v = rng.normal(size=200_000)
    out = moving_average(v, 5)
    assert np.allclose(out, np.convolve(v, np.ones(5) / 5, mode="valid"), atol=1e-13)
    assert out.var() == pytest.approx(0.2, rel=0.02)


def test_kind_parsing():
    assert TestKind.parse("KS") is TestKind.KolmogorovSmirnov2
    assert [k.short for k in TestKind] == ["u", "k", "f"]
    with pytest.raises(ValueError):
        TestKind.parse("t")
