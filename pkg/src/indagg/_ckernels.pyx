# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: windowed test p-values, indicator bits, tree growing and
tree prediction. Mirrors ``indagg._pykernels`` call for call."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, sqrt, erfc, lgamma, fabs, ceil, M_PI
from libc.stdlib cimport malloc, free, qsort
from libc.string cimport memset
from libc.stdint cimport uint64_t, int64_t, int32_t, uint8_t

from .stattests import mwu_exact_pvalue

cnp.import_array()

NAME = "cython"

cdef double BETACF_TOL = 1e-12
cdef int BETACF_MAXITER = 1000
cdef double KOLMOGOROV_TOL = 1e-10
cdef double FPMIN = 1e-300
cdef int EXACT_U_THRESHOLD = 12

cdef enum:
    TEST_U = 0
    TEST_KS = 1
    TEST_F = 2
    RULE_BASE = 0
    RULE_RATE = 1
    RULE_RUN = 2
    RULE_KOFN = 3
    FLAG_OK = 0
    FLAG_SHORT = 1
    FLAG_FEW_WINDOWS = 2


# ---------------------------------------------------------------- special

cdef inline double _clamp(double v) noexcept nogil:
    return FPMIN if fabs(v) < FPMIN else v


cdef double _betacf(double a, double b, double x) noexcept nogil:
    cdef double qab = a + b, qap = a + 1.0, qam = a - 1.0
    cdef double c = 1.0, d, h, aa, delta
    cdef int m, m2
    d = 1.0 / _clamp(1.0 - qab * x / qap)
    h = d
    for m in range(1, BETACF_MAXITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 / _clamp(1.0 + aa * d)
        c = _clamp(1.0 + aa / c)
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 / _clamp(1.0 + aa * d)
        c = _clamp(1.0 + aa / c)
        delta = d * c
        h *= delta
        if fabs(delta - 1.0) < BETACF_TOL:
            break
    return h


cdef double _betainc(double a, double b, double x) noexcept nogil:
    cdef double bt
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    bt = exp(lgamma(a + b) - lgamma(a) - lgamma(b) + a * log(x) + b * log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


cdef double _kolmogorov_sf(double lam) noexcept nogil:
    cdef double w, k, s = 0.0, term, sign = 1.0, p
    cdef int j
    if lam <= 0.0:
        return 1.0
    if lam < 1.18:
        w = sqrt(2.0 * M_PI) / lam
        k = M_PI * M_PI / (8.0 * lam * lam)
        for j in range(1, 200):
            term = w * exp(-(2 * j - 1) * (2 * j - 1) * k)
            s += term
            if term < KOLMOGOROV_TOL:
                break
        p = 1.0 - s
    else:
        for j in range(1, 200):
            term = 2.0 * exp(-2.0 * j * j * lam * lam)
            s += sign * term
            sign = -sign
            if term < KOLMOGOROV_TOL:
                break
        p = s
    if p < 0.0:
        return 0.0
    if p > 1.0:
        return 1.0
    return p


cdef int _cmp_double(const void *a, const void *b) noexcept nogil:
    cdef double x = (<const double *> a)[0], y = (<const double *> b)[0]
    return (x > y) - (x < y)


# --------------------------------------------------------------- p-values

cdef void _u_window(const double *v, int n, int length, int h1, int h2, int m,
                    int has_ties, int64_t *pref, double *tmp, double *out) noexcept nogil:
    cdef int i, j, t, a, b, c, g
    cdef int64_t row, u2, ties
    cdef int n1 = n + 1
    cdef double u, var, z
    memset(pref, 0, n1 * n1 * sizeof(int64_t))
    # column-then-row prefix sums of 2*[v_i > v_j] + [v_i == v_j]
    for i in range(n):
        row = 0
        for j in range(n):
            row += 2 * (v[i] > v[j]) + (v[i] == v[j])
            pref[(i + 1) * n1 + j + 1] = pref[i * n1 + j + 1] + row
    for t in range(m):
        a = t
        b = t + h1
        c = t + length
        u2 = pref[b * n1 + c] - pref[a * n1 + c] - pref[b * n1 + b] + pref[a * n1 + b]
        u = u2 * 0.5
        ties = 0
        if has_ties:
            for i in range(length):
                tmp[i] = v[t + i]
            qsort(tmp, length, sizeof(double), _cmp_double)
            i = 0
            while i < length:
                g = 1
                while i + g < length and tmp[i + g] == tmp[i]:
                    g += 1
                ties += <int64_t> g * g * g - g
                i += g
        var = h1 * h2 / 12.0 * ((length + 1) - ties / (length * (length - 1.0)))
        if var > 0:
            z = (fabs(u - h1 * h2 / 2.0) - 0.5) / sqrt(var)
            out[t] = erfc(z / sqrt(2.0))
            if out[t] > 1.0:
                out[t] = 1.0
        else:
            out[t] = 1.0
        if length <= EXACT_U_THRESHOLD and ties == 0:
            out[t] = -1.0 - u  # resolved with the GIL held afterwards


cdef void _ks_window(const double *v, int n, int length, int h1, int h2, int m,
                     const int64_t *order, const uint8_t *is_end, double *out) noexcept nogil:
    cdef int t, r
    cdef int64_t idx, cum, dmax, absval
    cdef double scale = sqrt(<double> (h1 * h2) / (h1 + h2)), d
    for t in range(m):
        cum = 0
        dmax = 0
        for r in range(n):
            idx = order[r]
            if idx >= t and idx < t + h1:
                cum += h2
            elif idx >= t + h1 and idx < t + length:
                cum -= h1
            if is_end[r]:
                absval = cum if cum >= 0 else -cum
                if absval > dmax:
                    dmax = absval
        d = dmax / <double> (h1 * h2)
        out[t] = _kolmogorov_sf(scale * d)


cdef inline double _var(const double *x, int h) noexcept nogil:
    cdef double s = x[0], mean, ss, dv
    cdef int i
    for i in range(1, h):
        s += x[i]
    mean = s / h
    dv = x[0] - mean
    ss = dv * dv
    for i in range(1, h):
        dv = x[i] - mean
        ss += dv * dv
    return ss / (h - 1)


cdef void _f_window(const double *v, int length, int h1, int h2, int m, double *out) noexcept nogil:
    cdef int t
    cdef double vx, vy, f, dfn = h1 - 1, dfd = h2 - 1, cdf, sf
    for t in range(m):
        vx = _var(v + t, h1)
        vy = _var(v + t + h1, h2)
        if vx == 0.0 and vy == 0.0:
            out[t] = 1.0
        elif vx == 0.0 or vy == 0.0:
            out[t] = 0.0
        else:
            f = vx / vy
            cdf = _betainc(dfn / 2.0, dfd / 2.0, dfn * f / (dfn * f + dfd))
            sf = _betainc(dfd / 2.0, dfn / 2.0, dfd / (dfn * f + dfd))
            out[t] = 2.0 * (cdf if cdf < sf else sf)
            if out[t] > 1.0:
                out[t] = 1.0


cdef class _Prepared:
    """Per-signal scratch data shared by all windows of one variant."""
    cdef public object values, order, is_end
    cdef public int has_ties

    def __init__(self, values):
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.order = np.argsort(self.values, kind="stable").astype(np.int64)
        s = self.values[self.order]
        self.is_end = np.ascontiguousarray(np.r_[s[1:] != s[:-1], True], dtype=np.uint8)
        self.has_ties = int(np.unique(self.values).size < self.values.size)


cdef object _pvalues(_Prepared prep, int test, int length):
    cdef const double[::1] v = prep.values
    cdef const int64_t[::1] order = prep.order
    cdef const uint8_t[::1] is_end = prep.is_end
    cdef int n = v.shape[0], h1, h2, m, t
    cdef int64_t *pref
    cdef double *tmp
    if length < 4:
        raise ValueError("window length must be at least 4")
    if n < length:
        return np.empty(0)
    h1 = length // 2
    h2 = length - h1
    m = n - length + 1
    res = np.empty(m)
    cdef double[::1] out = res
    if test == TEST_U:
        pref = <int64_t *> malloc((n + 1) * (n + 1) * sizeof(int64_t))
        tmp = <double *> malloc(length * sizeof(double))
        if pref == NULL or tmp == NULL:
            free(pref)
            free(tmp)
            raise MemoryError()
        with nogil:
            _u_window(&v[0], n, length, h1, h2, m, prep.has_ties, pref, tmp, &out[0])
        free(pref)
        free(tmp)
        if length <= EXACT_U_THRESHOLD:
            for t in range(m):
                if out[t] < 0:
                    out[t] = mwu_exact_pvalue(-1.0 - out[t], h1, h2)
    elif test == TEST_KS:
        with nogil:
            _ks_window(&v[0], n, length, h1, h2, m, &order[0], &is_end[0], &out[0])
    elif test == TEST_F:
        with nogil:
            _f_window(&v[0], length, h1, h2, m, &out[0])
    else:
        raise ValueError(f"unknown test code {test}")
    return res


def window_pvalues(values, int test, int length):
    """p-values of ``test`` for every window start (step 1)."""
    return _pvalues(_Prepared(values), test, length)


# ------------------------------------------------------------ aggregation

cdef inline int _need(double beta, int m) noexcept nogil:
    return <int> ceil(beta * m - 1e-9)


cdef int _aggregate(const double *p, int m_full, int step, double level, int rule,
                    double beta, int k, int nc, uint8_t *flag) noexcept nogil:
    cdef int m = (m_full - 1) // step + 1
    cdef int i, ones = 0, run = 0, best = 0, win = 0
    flag[0] = FLAG_OK
    if rule == RULE_BASE:
        for i in range(m):
            if p[i * step] < level:
                return 1
        return 0
    if rule == RULE_RATE:
        for i in range(m):
            ones += p[i * step] < level
        return ones >= _need(beta, m)
    if rule == RULE_RUN:
        for i in range(m):
            if p[i * step] < level:
                run += 1
                if run > best:
                    best = run
            else:
                run = 0
        return best >= _need(beta, m)
    # k of nc consecutive
    if m < nc:
        flag[0] = FLAG_FEW_WINDOWS
        return 0
    for i in range(m):
        win += p[i * step] < level
        if i >= nc:
            win -= p[(i - nc) * step] < level
        if i >= nc - 1 and win >= k:
            return 1
    return 0


def indicator_vector(values, smoothed, g_smoothed, g_test, g_length, c_group, c_step,
                     c_level, c_rule, c_beta, c_k, c_n, int auto_cap):
    """Bits and status flags for every configuration of a compiled grid."""
    cdef int n_groups = len(g_test), g, length, code, size = len(c_group), c
    variants = [None, None]
    pvals = []
    for g in range(n_groups):
        smo = int(g_smoothed[g])
        if variants[smo] is None:
            variants[smo] = _Prepared(smoothed if smo else values)
        prep = variants[smo]
        code = int(g_length[g])
        length = min(prep.values.shape[0] - 2, auto_cap) if code == 0 else code
        pvals.append(_pvalues(prep, int(g_test[g]), length) if length >= 4 else np.empty(0))
    # flatten p-values so the per-config loop runs without the GIL
    offsets = np.zeros(n_groups + 1, dtype=np.int64)
    for g in range(n_groups):
        offsets[g + 1] = offsets[g] + pvals[g].shape[0]
    flat = np.concatenate(pvals) if n_groups else np.empty(0)
    if flat.shape[0] == 0:
        flat = np.zeros(1)
    cdef const double[::1] fp = flat
    cdef const int64_t[::1] off = offsets
    cdef const int64_t[::1] grp = np.ascontiguousarray(c_group, dtype=np.int64)
    cdef const int64_t[::1] stp = np.ascontiguousarray(c_step, dtype=np.int64)
    cdef const double[::1] lvl = np.ascontiguousarray(c_level, dtype=np.float64)
    cdef const int64_t[::1] rul = np.ascontiguousarray(c_rule, dtype=np.int64)
    cdef const double[::1] bet = np.ascontiguousarray(c_beta, dtype=np.float64)
    cdef const int64_t[::1] kk = np.ascontiguousarray(c_k, dtype=np.int64)
    cdef const int64_t[::1] nn = np.ascontiguousarray(c_n, dtype=np.int64)
    bits_arr = np.zeros(size, dtype=np.uint8)
    flags_arr = np.zeros(size, dtype=np.uint8)
    cdef uint8_t[::1] bits = bits_arr
    cdef uint8_t[::1] flags = flags_arr
    cdef int64_t m_full
    with nogil:
        for c in range(size):
            g = <int> grp[c]
            m_full = off[g + 1] - off[g]
            if m_full == 0:
                flags[c] = FLAG_SHORT
                continue
            bits[c] = _aggregate(&fp[off[g]], <int> m_full, <int> stp[c], lvl[c], <int> rul[c],
                                 bet[c], <int> kk[c], <int> nn[c], &flags[c])
    return bits_arr, flags_arr


# ----------------------------------------------------------------- forest

cdef inline uint64_t _splitmix(uint64_t *state) noexcept nogil:
    cdef uint64_t z
    state[0] += <uint64_t> 0x9E3779B97F4A7C15
    z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t> 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t> 0x94D049BB133111EB
    return z ^ (z >> 31)


cdef struct _Frame:
    int start
    int end
    int depth
    int node


def build_tree(xt, y, weights, int mtry, int max_depth, int min_leaf, seed):
    """Grow one classification tree; see ``_pykernels.build_tree``."""
    cdef const uint8_t[:, ::1] X = np.ascontiguousarray(xt, dtype=np.uint8)
    cdef const uint8_t[::1] Y = np.ascontiguousarray(y, dtype=np.uint8)
    cdef const int64_t[::1] W = np.ascontiguousarray(weights, dtype=np.int64)
    cdef int p = X.shape[0]
    samples_arr = np.flatnonzero(np.asarray(weights) > 0).astype(np.int32)
    cdef int32_t[::1] samples = samples_arr
    cdef int n_in = samples.shape[0]
    cdef int cap = max(1, 2 * n_in)
    feature_arr = np.full(cap, -1, dtype=np.int32)
    left_arr = np.full(cap, -1, dtype=np.int32)
    right_arr = np.full(cap, -1, dtype=np.int32)
    value_arr = np.zeros((cap, 2), dtype=np.int64)
    impr_arr = np.zeros(cap)
    features_arr = np.arange(p, dtype=np.int32)
    cdef int32_t[::1] feature = feature_arr, left = left_arr, right = right_arr
    cdef int32_t[::1] features = features_arr
    cdef int64_t[:, ::1] value = value_arr
    cdef double[::1] improvement = impr_arr
    cdef uint64_t state = <uint64_t> (int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef _Frame *stack = <_Frame *> malloc(cap * sizeof(_Frame))
    cdef int32_t *scratch = <int32_t *> malloc(max(1, n_in) * sizeof(int32_t))
    if stack == NULL or scratch == NULL:
        free(stack)
        free(scratch)
        raise MemoryError()
    cdef int sp = 0, n_nodes = 1, start, end, depth, node, i, j, s, f, tmpf
    cdef int visited, found, best_f, nl_count, lo, hi
    cdef int64_t c0, c1, total, a, r, nl, b, sl, sr, num, den, best_num, best_den, wi
    cdef const uint8_t *col
    with nogil:
        stack[0].start = 0
        stack[0].end = n_in
        stack[0].depth = 0
        stack[0].node = 0
        sp = 1
        while sp > 0:
            sp -= 1
            start = stack[sp].start
            end = stack[sp].end
            depth = stack[sp].depth
            node = stack[sp].node
            c0 = 0
            c1 = 0
            for i in range(start, end):
                s = samples[i]
                if Y[s]:
                    c1 += W[s]
                else:
                    c0 += W[s]
            total = c0 + c1
            value[node, 0] = c0
            value[node, 1] = c1
            if c0 == 0 or c1 == 0 or depth == max_depth or total < 2 * min_leaf:
                continue
            best_f = -1
            best_num = 0
            best_den = 1
            i = 0
            visited = 0
            found = 0
            while i < p and (visited < mtry or found == 0):
                j = i + <int> (_splitmix(&state) % <uint64_t> (p - i))
                tmpf = features[i]
                features[i] = features[j]
                features[j] = tmpf
                f = features[i]
                i += 1
                visited += 1
                col = &X[f, 0]
                a = 0
                r = 0
                for j in range(start, end):
                    s = samples[j]
                    if col[s]:
                        wi = W[s]
                        r += wi
                        if Y[s]:
                            a += wi
                nl = total - r
                if r == 0 or nl == 0:
                    continue
                found += 1
                if r < min_leaf or nl < min_leaf:
                    continue
                b = r - a
                sl = (c1 - a) * (c1 - a) + (c0 - b) * (c0 - b)
                sr = a * a + b * b
                num = sl * r + sr * nl
                den = nl * r
                if best_f < 0 or num * best_den > best_num * den or (
                        num * best_den == best_num * den and f < best_f):
                    best_f = f
                    best_num = num
                    best_den = den
            if best_f < 0:
                continue
            # stable partition: bit 0 rows first
            col = &X[best_f, 0]
            lo = 0
            hi = 0
            for j in range(start, end):
                if not col[samples[j]]:
                    lo += 1
            nl_count = lo
            lo = start
            hi = 0
            for j in range(start, end):
                s = samples[j]
                if col[s]:
                    scratch[hi] = s
                    hi += 1
                else:
                    samples[lo] = s
                    lo += 1
            for j in range(hi):
                samples[lo + j] = scratch[j]
            feature[node] = best_f
            improvement[node] = <double> best_num / <double> best_den - <double> (c0 * c0 + c1 * c1) / <double> total
            left[node] = n_nodes
            right[node] = n_nodes + 1
            stack[sp].start = start + nl_count
            stack[sp].end = end
            stack[sp].depth = depth + 1
            stack[sp].node = n_nodes + 1
            sp += 1
            stack[sp].start = start
            stack[sp].end = start + nl_count
            stack[sp].depth = depth + 1
            stack[sp].node = n_nodes
            sp += 1
            n_nodes += 2
    free(stack)
    free(scratch)
    return (feature_arr[:n_nodes].copy(), left_arr[:n_nodes].copy(), right_arr[:n_nodes].copy(),
            value_arr[:n_nodes].copy(), impr_arr[:n_nodes].copy())


def predict_trees(x, feature, left, right, leaf_class, offsets):
    """Per-tree class predictions, shape (n_trees, n_rows)."""
    cdef const uint8_t[:, ::1] X = np.ascontiguousarray(x, dtype=np.uint8)
    cdef const int32_t[::1] F = np.ascontiguousarray(feature, dtype=np.int32)
    cdef const int32_t[::1] L = np.ascontiguousarray(left, dtype=np.int32)
    cdef const int32_t[::1] R = np.ascontiguousarray(right, dtype=np.int32)
    cdef const uint8_t[::1] C = np.ascontiguousarray(leaf_class, dtype=np.uint8)
    cdef const int64_t[::1] O = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef int n_trees = O.shape[0] - 1, n_rows = X.shape[0], t, row
    cdef int64_t off, node
    res = np.empty((n_trees, n_rows), dtype=np.uint8)
    cdef uint8_t[:, ::1] out = res
    with nogil:
        for t in range(n_trees):
            off = O[t]
            for row in range(n_rows):
                node = 0
                while F[off + node] >= 0:
                    if X[row, F[off + node]]:
                        node = R[off + node]
                    else:
                        node = L[off + node]
                out[t, row] = C[off + node]
    return res
