"""Two-sample tests used as window detectors, and the smoothing pre-filter.

All tests are two-sided. Each returns a :class:`TestResult`; the window
kernels in :mod:`indagg.backend` compute the same p-values in bulk.
"""
import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegenerateSampleError, InsufficientDataError, InvalidWidthError
from .special import f_cdf, f_sf, kolmogorov_sf

EXACT_U_THRESHOLD = 12


class TestKind(enum.IntEnum):
    # integer codes are shared with the kernels
    MannWhitneyU = 0
    KolmogorovSmirnov2 = 1
    FVariance = 2

    __test__ = False  # keep pytest from collecting the enum

    @property
    def short(self):
        return "ukf"[self]

    @property
    def label(self):
        return ("U test", "KS test", "F test")[self]

    @classmethod
    def parse(cls, token):
        key = token.strip().lower()
        table = {"u": cls.MannWhitneyU, "mwu": cls.MannWhitneyU, "ks": cls.KolmogorovSmirnov2,
                 "k": cls.KolmogorovSmirnov2, "f": cls.FVariance}
        if key not in table:
            raise ValueError(f"unknown test kind {token!r}")
        return table[key]


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n1: int
    n2: int

    __test__ = False


def _as_samples(x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size < 2 or y.size < 2:
        raise InsufficientDataError(f"need at least 2 observations per sample, got {x.size} and {y.size}")
    return x, y


def rankdata(a):
    """Average ranks (1-based) with ties sharing the mean rank."""
    a = np.asarray(a, dtype=float)
    order = np.argsort(a, kind="stable")
    s = a[order]
    # boundaries of tie groups in sorted order
    edges = np.flatnonzero(np.r_[True, s[1:] != s[:-1], True])
    ranks_sorted = np.empty(a.size)
    for lo, hi in zip(edges[:-1], edges[1:]):
        ranks_sorted[lo:hi] = 0.5 * (lo + 1 + hi)
    ranks = np.empty(a.size)
    ranks[order] = ranks_sorted
    return ranks


def tie_term(a):
    """Sum of ``t**3 - t`` over tie groups of ``a``."""
    _, counts = np.unique(np.asarray(a), return_counts=True)
    counts = counts.astype(np.int64)
    return int(np.sum(counts ** 3 - counts))


@lru_cache(maxsize=256)
def u_null_counts(n1, n2):
    """Number of arrangements giving each value of U (pairs x > y), tie-free.

    Recursion on whether the largest pooled observation belongs to x (it then
    beats all ``n2`` values of y) or to y.
    """
    if n1 == 0 or n2 == 0:
        return (1,)
    with_x = u_null_counts(n1 - 1, n2)
    with_y = u_null_counts(n1, n2 - 1)
    out = [0] * (n1 * n2 + 1)
    for u, c in enumerate(with_x):
        out[u + n2] += c
    for u, c in enumerate(with_y):
        out[u] += c
    return tuple(out)


def mwu_exact_pvalue(u, n1, n2):
    counts = u_null_counts(n1, n2)
    total = math.comb(n1 + n2, n1)
    k = int(round(u))
    lower = sum(counts[: k + 1])
    upper = sum(counts[k:])
    return min(1.0, 2.0 * min(lower, upper) / total)


def mwu_normal_pvalue(u, n1, n2, ties=0):
    n = n1 + n2
    var = n1 * n2 / 12.0 * ((n + 1) - ties / (n * (n - 1)))
    if var <= 0:
        return 1.0
    z = (abs(u - n1 * n2 / 2.0) - 0.5) / math.sqrt(var)
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


def mann_whitney_u(x, y, exact_threshold=EXACT_U_THRESHOLD):
    """Mann-Whitney U test, two-sided.

    The statistic is U for ``x`` (pairs with x above y, ties counting half).
    Tie-free samples with ``n1 + n2 <= exact_threshold`` use the exact null
    distribution; everything else uses the normal approximation with tie and
    continuity corrections.
    """
    x, y = _as_samples(x, y)
    n1, n2 = x.size, y.size
    pooled = np.concatenate([x, y])
    ranks = rankdata(pooled)
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    ties = tie_term(pooled)
    if ties == 0 and n1 + n2 <= exact_threshold:
        p = mwu_exact_pvalue(u, n1, n2)
    else:
        p = mwu_normal_pvalue(u, n1, n2, ties)
    return TestResult(u, p, n1, n2)


def ks_statistic(x, y):
    x = np.sort(x)
    y = np.sort(y)
    pooled = np.concatenate([x, y])
    # right-continuous ECDFs at every pooled point handle ties
    fx = np.searchsorted(x, pooled, side="right") / x.size
    fy = np.searchsorted(y, pooled, side="right") / y.size
    return float(np.max(np.abs(fx - fy)))


def kolmogorov_smirnov_2(x, y):
    """Two-sample Kolmogorov-Smirnov test with the asymptotic p-value."""
    x, y = _as_samples(x, y)
    d = ks_statistic(x, y)
    ne = x.size * y.size / (x.size + y.size)
    return TestResult(d, kolmogorov_sf(math.sqrt(ne) * d), x.size, y.size)


def f_pvalue(f, dfn, dfd):
    return min(1.0, 2.0 * min(f_cdf(f, dfn, dfd), f_sf(f, dfn, dfd)))


def f_test_variance(x, y):
    """F test for equal variances: ``F = s2(x) / s2(y)``, two-sided."""
    x, y = _as_samples(x, y)
    vx = float(np.var(x, ddof=1))
    vy = float(np.var(y, ddof=1))
    if vx == 0.0 or vy == 0.0:
        raise DegenerateSampleError("F test needs non-zero variance in both samples")
    f = vx / vy
    return TestResult(f, f_pvalue(f, x.size - 1, y.size - 1), x.size, y.size)


def moving_average(signal, width=5):
    """Trailing-window mean; output has ``len(signal) - width + 1`` points."""
    v = np.asarray(signal, dtype=float)
    if width < 1 or width > v.size:
        raise InvalidWidthError(f"width must be in [1, {v.size}], got {width}")
    m = v.size - width + 1
    acc = v[:m].copy()
    # sequential adds keep the result bit-identical to the compiled kernel
    for k in range(1, width):
        acc += v[k:k + m]
    return acc / width


TESTS = {
    TestKind.MannWhitneyU: mann_whitney_u,
    TestKind.KolmogorovSmirnov2: kolmogorov_smirnov_2,
    TestKind.FVariance: f_test_variance,
}


def run_test(kind, x, y):
    return TESTS[TestKind(kind)](x, y)
