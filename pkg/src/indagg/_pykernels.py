"""Pure-Python (numpy) kernels.

Same call signatures and results as the compiled ``_ckernels`` module; used
when the extension is missing or ``INDAGG_BACKEND=python`` is set.
"""
import math

import numpy as np

from .special import BETACF_MAXITER, BETACF_TOL, kolmogorov_sf
from .stattests import EXACT_U_THRESHOLD, mwu_exact_pvalue

NAME = "python"

TEST_U, TEST_KS, TEST_F = 0, 1, 2
RULE_BASE, RULE_RATE, RULE_RUN, RULE_KOFN = 0, 1, 2, 3
FLAG_OK, FLAG_SHORT, FLAG_FEW_WINDOWS = 0, 1, 2

_MASK64 = (1 << 64) - 1
_FPMIN = 1e-300


# ---------------------------------------------------------------- p-values

def _sequential_sum(cols):
    acc = cols[:, 0].copy()
    for k in range(1, cols.shape[1]):
        acc += cols[:, k]
    return acc


def _window_var(block):
    h = block.shape[1]
    mean = _sequential_sum(block) / h
    dev = block - mean[:, None]
    return _sequential_sum(dev * dev) / (h - 1)


def _betainc_vec(a, b, x):
    """Vectorised regularized incomplete beta for scalar ``a, b``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    lo = x <= 0.0
    hi = x >= 1.0
    out[lo] = 0.0
    out[hi] = 1.0
    mid = ~(lo | hi)
    if not mid.any():
        return out
    xm = x[mid]
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    bt = np.exp(log_front + a * np.log(xm) + b * np.log1p(-xm))
    direct = xm < (a + 1.0) / (a + b + 2.0)
    res = np.empty_like(xm)
    if direct.any():
        res[direct] = bt[direct] * _betacf_vec(a, b, xm[direct]) / a
    if (~direct).any():
        res[~direct] = 1.0 - bt[~direct] * _betacf_vec(b, a, 1.0 - xm[~direct]) / b
    out[mid] = res
    return out


def _clamp(v):
    return np.where(np.abs(v) < _FPMIN, _FPMIN, v)


def _betacf_vec(a, b, x):
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = np.ones_like(x)
    d = 1.0 / _clamp(1.0 - qab * x / qap)
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, BETACF_MAXITER + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xi, ci, di = x[idx], c[idx], d[idx]
        m2 = 2 * m
        aa = m * (b - m) * xi / ((qam + m2) * (a + m2))
        di = 1.0 / _clamp(1.0 + aa * di)
        ci = _clamp(1.0 + aa / ci)
        hi = h[idx] * (di * ci)
        aa = -(a + m) * (qab + m) * xi / ((a + m2) * (qap + m2))
        di = 1.0 / _clamp(1.0 + aa * di)
        ci = _clamp(1.0 + aa / ci)
        delta = di * ci
        hi *= delta
        c[idx], d[idx], h[idx] = ci, di, hi
        active[idx] = np.abs(delta - 1.0) >= BETACF_TOL
    if active.any():
        raise ArithmeticError("incomplete beta continued fraction did not converge")
    return h


def _u_pvalues(v, length, h1, h2, m):
    gt = (v[:, None] > v[None, :]).astype(np.int64)
    eq = (v[:, None] == v[None, :]).astype(np.int64)
    n = v.size
    pref = np.zeros((n + 1, n + 1), dtype=np.int64)
    pref[1:, 1:] = (2 * gt + eq).cumsum(axis=0).cumsum(axis=1)
    a = np.arange(m)
    b = a + h1
    c = a + length
    u2 = pref[b, c] - pref[a, c] - pref[b, b] + pref[a, b]
    u = u2 * 0.5
    if np.unique(v).size < n:
        ties = np.empty(m, dtype=np.int64)
        for t in range(m):
            _, cnt = np.unique(v[t:t + length], return_counts=True)
            cnt = cnt.astype(np.int64)
            ties[t] = int(np.sum(cnt ** 3 - cnt))
    else:
        ties = np.zeros(m, dtype=np.int64)
    var = h1 * h2 / 12.0 * ((length + 1) - ties / (length * (length - 1.0)))
    out = np.ones(m)
    ok = var > 0
    z = (np.abs(u[ok] - h1 * h2 / 2.0) - 0.5) / np.sqrt(var[ok])
    out[ok] = np.minimum(1.0, [math.erfc(zz / math.sqrt(2.0)) for zz in z])
    if length <= EXACT_U_THRESHOLD:
        for t in np.flatnonzero(ties == 0):
            out[t] = mwu_exact_pvalue(u[t], h1, h2)
    return out


def _ks_pvalues(v, length, h1, h2, m):
    order = np.argsort(v, kind="stable")
    s = v[order]
    is_end = np.r_[s[1:] != s[:-1], True]
    t = np.arange(m)[:, None]
    idx = order[None, :]
    left = (idx >= t) & (idx < t + h1)
    right = (idx >= t + h1) & (idx < t + length)
    contrib = left.astype(np.int64) * h2 - right.astype(np.int64) * h1
    cum = np.cumsum(contrib, axis=1)[:, is_end]
    d = np.abs(cum).max(axis=1) / float(h1 * h2)
    scale = math.sqrt(h1 * h2 / (h1 + h2))
    cache = {}
    out = np.empty(m)
    for i, dd in enumerate(d):
        if dd not in cache:
            cache[dd] = kolmogorov_sf(scale * dd)
        out[i] = cache[dd]
    return out


def _f_pvalues(v, length, h1, h2, m):
    w = np.lib.stride_tricks.sliding_window_view(v, length)
    vx = _window_var(w[:, :h1])
    vy = _window_var(w[:, h1:])
    out = np.empty(m)
    both = (vx == 0.0) & (vy == 0.0)
    one = (vx == 0.0) ^ (vy == 0.0)
    ok = ~(both | one)
    out[both] = 1.0
    out[one] = 0.0
    if ok.any():
        f = vx[ok] / vy[ok]
        dfn, dfd = float(h1 - 1), float(h2 - 1)
        cdf = _betainc_vec(dfn / 2.0, dfd / 2.0, dfn * f / (dfn * f + dfd))
        sf = _betainc_vec(dfd / 2.0, dfn / 2.0, dfd / (dfn * f + dfd))
        out[ok] = np.minimum(1.0, 2.0 * np.minimum(cdf, sf))
    return out


def window_pvalues(values, test, length):
    """p-values of ``test`` for every window start (step 1).

    Window ``t`` compares ``values[t : t + length//2]`` against
    ``values[t + length//2 : t + length]``. Returns an empty array when the
    signal is shorter than ``length``.
    """
    v = np.ascontiguousarray(values, dtype=np.float64)
    n = v.size
    if length < 4:
        raise ValueError("window length must be at least 4")
    if n < length:
        return np.empty(0)
    h1 = length // 2
    h2 = length - h1
    m = n - length + 1
    if test == TEST_U:
        return _u_pvalues(v, length, h1, h2, m)
    if test == TEST_KS:
        return _ks_pvalues(v, length, h1, h2, m)
    if test == TEST_F:
        return _f_pvalues(v, length, h1, h2, m)
    raise ValueError(f"unknown test code {test}")


# ------------------------------------------------------------- aggregation

def _need(beta, m):
    return int(math.ceil(beta * m - 1e-9))


def _longest_run(d):
    best = run = 0
    for bit in d:
        run = run + 1 if bit else 0
        if run > best:
            best = run
    return best


def aggregate_bits(d, rule, beta, k, n):
    """Reduce a decision sequence to ``(bit, flag)``."""
    m = d.size
    if rule == RULE_BASE:
        return int(d.any()), FLAG_OK
    if rule == RULE_RATE:
        return int(int(d.sum()) >= _need(beta, m)), FLAG_OK
    if rule == RULE_RUN:
        return int(_longest_run(d) >= _need(beta, m)), FLAG_OK
    if rule == RULE_KOFN:
        if m < n:
            return 0, FLAG_FEW_WINDOWS
        sums = np.convolve(d.astype(np.int64), np.ones(n, dtype=np.int64), mode="valid")
        return int(sums.max() >= k), FLAG_OK
    raise ValueError(f"unknown rule code {rule}")


def resolve_length(code, n_eff, auto_cap):
    return min(n_eff - 2, auto_cap) if code == 0 else code


def indicator_vector(values, smoothed, g_smoothed, g_test, g_length, c_group, c_step,
                     c_level, c_rule, c_beta, c_k, c_n, auto_cap):
    """Bits and status flags for every configuration of a compiled grid."""
    pvals = []
    for smo, test, code in zip(g_smoothed, g_test, g_length):
        v = smoothed if smo else values
        length = resolve_length(int(code), v.size, auto_cap)
        pvals.append(window_pvalues(v, int(test), length) if length >= 4 else np.empty(0))
    size = len(c_group)
    bits = np.zeros(size, dtype=np.uint8)
    flags = np.zeros(size, dtype=np.uint8)
    for c in range(size):
        p = pvals[c_group[c]]
        if p.size == 0:
            flags[c] = FLAG_SHORT
            continue
        d = p[::c_step[c]] < c_level[c]
        bits[c], flags[c] = aggregate_bits(d, c_rule[c], c_beta[c], c_k[c], c_n[c])
    return bits, flags


# ------------------------------------------------------------------ forest

class SplitMix64:
    def __init__(self, seed):
        self.state = int(seed) & _MASK64

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, k):
        return self.next() % k


def _better(num, den, best_num, best_den):
    return num * best_den > best_num * den


def build_tree(xt, y, weights, mtry, max_depth, min_leaf, seed):
    """Grow one classification tree on bootstrap-weighted binary features.

    ``xt`` is the (features, rows) transposed bit matrix, ``weights`` the
    bootstrap multiplicity of each row. Splits send bit 0 left and bit 1
    right. Returns ``(feature, left, right, value, improvement)``; leaves
    have ``feature == -1`` and ``value`` holds weighted class counts.
    """
    p = xt.shape[0]
    rng = SplitMix64(seed)
    w = np.asarray(weights, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    samples = np.flatnonzero(w > 0)
    features = np.arange(p)
    cap = max(1, 2 * samples.size)
    feature = np.full(cap, -1, dtype=np.int32)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    value = np.zeros((cap, 2), dtype=np.int64)
    improvement = np.zeros(cap)
    n_nodes = 1
    stack = [(0, samples.size, 0, 0)]
    while stack:
        start, end, depth, node = stack.pop()
        idx = samples[start:end]
        wi = w[idx]
        yi = y[idx]
        c1 = int(wi[yi == 1].sum())
        c0 = int(wi.sum()) - c1
        total = c0 + c1
        value[node] = (c0, c1)
        if c0 == 0 or c1 == 0 or depth == max_depth or total < 2 * min_leaf:
            continue
        best_f = -1
        best_num, best_den = 0, 1
        i = 0
        visited = found = 0
        w1 = wi * yi
        while i < p and (visited < mtry or found == 0):
            # draw a batch when the full quota is still outstanding
            take = mtry - visited if visited < mtry else 1
            take = min(take, p - i)
            drawn = []
            for _ in range(take):
                j = i + rng.below(p - i)
                features[i], features[j] = features[j], features[i]
                drawn.append(features[i])
                i += 1
            visited += take
            bits = xt[drawn][:, idx].astype(np.int64)
            a1 = bits @ w1
            nr = bits @ wi
            for f, a, r in zip(drawn, a1.tolist(), nr.tolist()):
                nl = total - r
                if r == 0 or nl == 0:
                    continue
                found += 1
                if r < min_leaf or nl < min_leaf:
                    continue
                b = r - a
                sl = (c1 - a) ** 2 + (c0 - b) ** 2
                sr = a * a + b * b
                num = sl * r + sr * nl
                den = nl * r
                if best_f < 0 or _better(num, den, best_num, best_den) or (
                        num * best_den == best_num * den and f < best_f):
                    best_f, best_num, best_den = f, num, den
        if best_f < 0:
            continue
        go_right = xt[best_f, idx].astype(bool)
        samples[start:end] = np.concatenate([idx[~go_right], idx[go_right]])
        mid = start + int((~go_right).sum())
        feature[node] = best_f
        improvement[node] = best_num / best_den - (c0 * c0 + c1 * c1) / total
        lnode, rnode = n_nodes, n_nodes + 1
        n_nodes += 2
        left[node], right[node] = lnode, rnode
        stack.append((mid, end, depth + 1, rnode))
        stack.append((start, mid, depth + 1, lnode))
    return (feature[:n_nodes].copy(), left[:n_nodes].copy(), right[:n_nodes].copy(),
            value[:n_nodes].copy(), improvement[:n_nodes].copy())


def predict_trees(x, feature, left, right, leaf_class, offsets):
    """Per-tree class predictions, shape (n_trees, n_rows)."""
    x = np.asarray(x, dtype=np.uint8)
    rows = np.arange(x.shape[0])
    n_trees = len(offsets) - 1
    out = np.empty((n_trees, x.shape[0]), dtype=np.uint8)
    for t in range(n_trees):
        off = offsets[t]
        node = np.zeros(x.shape[0], dtype=np.int64)
        while True:
            f = feature[off + node]
            active = f >= 0
            if not active.any():
                break
            na = node[active]
            bit = x[rows[active], f[active]]
            node[active] = np.where(bit == 1, right[off + na], left[off + na])
        out[t] = leaf_class[off + node]
    return out
