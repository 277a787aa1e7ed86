"""Scalar special functions behind the two-sample tests.

Pure Python on purpose: these are the reference versions that the compiled
and vectorised kernels are checked against.
"""
import math

BETACF_TOL = 1e-12
BETACF_MAXITER = 1000
KOLMOGOROV_TOL = 1e-10
_FPMIN = 1e-300


def norm_sf(z):
    """Standard normal upper tail ``P(Z > z)``."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _betacf(a, b, x):
    # modified Lentz evaluation of the incomplete beta continued fraction
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, BETACF_MAXITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < BETACF_TOL:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a, b, x):
    """Regularized incomplete beta function ``I_x(a, b)``.

    Continued fraction (Lentz) on whichever side of ``(a+1)/(a+b+2)`` the
    argument falls, converged to a relative step of ``BETACF_TOL``.
    """
    if a <= 0 or b <= 0:
        raise ValueError("betainc requires a > 0 and b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_bt = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    bt = math.exp(log_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def f_cdf(f, dfn, dfd):
    if f <= 0.0:
        return 0.0
    if math.isinf(f):
        return 1.0
    return betainc(dfn / 2.0, dfd / 2.0, dfn * f / (dfn * f + dfd))


def f_sf(f, dfn, dfd):
    # evaluated directly rather than as 1 - cdf to keep the upper tail accurate
    if f <= 0.0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return betainc(dfd / 2.0, dfn / 2.0, dfd / (dfn * f + dfd))


def kolmogorov_sf(lam):
    """Limiting Kolmogorov distribution ``P(K > lam)``.

    Uses the theta-function form for small ``lam`` and the alternating
    series otherwise; either sum stops once a term drops below
    ``KOLMOGOROV_TOL``.
    """
    if lam <= 0.0:
        return 1.0
    if lam < 1.18:
        w = math.sqrt(2.0 * math.pi) / lam
        k = math.pi * math.pi / (8.0 * lam * lam)
        s = 0.0
        for j in range(1, 200):
            term = w * math.exp(-(2 * j - 1) ** 2 * k)
            s += term
            if term < KOLMOGOROV_TOL:
                break
        p = 1.0 - s
    else:
        s = 0.0
        sign = 1.0
        for j in range(1, 200):
            term = 2.0 * math.exp(-2.0 * j * j * lam * lam)
            s += sign * term
            sign = -sign
            if term < KOLMOGOROV_TOL:
                break
        p = s
    return min(1.0, max(0.0, p))
