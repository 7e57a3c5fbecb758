# cython: language_level=3
"""Compiled kernels for the sequential hot loops.

Mirrors ``kernels_py`` function for function; the numpy file is the
reference, this one exists for speed.  Float64 only.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, log1p, tanh, INFINITY

cnp.import_array()

BACKEND = "compiled"


cdef inline double _sigmoid(double x) nogil:
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    cdef double e = exp(x)
    return e / (1.0 + e)


cdef inline double _logaddexp(double x, double y) nogil:
    if x == -INFINITY:
        return y
    if y == -INFINITY:
        return x
    if x >= y:
        return x + log1p(exp(y - x))
    return y + log1p(exp(x - y))


# ---------------------------------------------------------------------------
# LSTM recurrence
# ---------------------------------------------------------------------------

def lstm_forward(cnp.ndarray[cnp.float64_t, ndim=2] xw,
                 cnp.ndarray[cnp.float64_t, ndim=2] wh):
    cdef Py_ssize_t T = xw.shape[0]
    cdef Py_ssize_t e4 = xw.shape[1]
    cdef Py_ssize_t E = e4 // 4
    cdef cnp.ndarray[cnp.float64_t, ndim=2] h_seq = np.empty((T, E))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gates = np.empty((T, e4))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] c_all = np.zeros((T + 1, E))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pre = np.empty(e4)
    cdef Py_ssize_t t, u, v
    cdef double acc, i_g, f_g, g_g, o_g, c

    with nogil:
        for t in range(T):
            for v in range(e4):
                acc = xw[t, v]
                if t > 0:
                    for u in range(E):
                        acc += h_seq[t - 1, u] * wh[u, v]
                pre[v] = acc
            for u in range(E):
                i_g = _sigmoid(pre[u])
                f_g = _sigmoid(pre[E + u])
                g_g = tanh(pre[2 * E + u])
                o_g = _sigmoid(pre[3 * E + u])
                c = f_g * c_all[t, u] + i_g * g_g
                gates[t, u] = i_g
                gates[t, E + u] = f_g
                gates[t, 2 * E + u] = g_g
                gates[t, 3 * E + u] = o_g
                c_all[t + 1, u] = c
                h_seq[t, u] = o_g * tanh(c)
    return h_seq, gates, c_all


def lstm_backward(cnp.ndarray[cnp.float64_t, ndim=2] wh,
                  cnp.ndarray[cnp.float64_t, ndim=2] gates,
                  cnp.ndarray[cnp.float64_t, ndim=2] c_all,
                  cnp.ndarray[cnp.float64_t, ndim=2] g_h):
    cdef Py_ssize_t T = gates.shape[0]
    cdef Py_ssize_t e4 = gates.shape[1]
    cdef Py_ssize_t E = e4 // 4
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dpre = np.empty((T, e4))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dh = np.zeros(E)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dc = np.zeros(E)
    cdef Py_ssize_t t, u, v
    cdef double i_g, f_g, g_g, o_g, tc, dcu, dhu, acc

    with nogil:
        for t in range(T - 1, -1, -1):
            for u in range(E):
                dhu = dh[u] + g_h[t, u]
                i_g = gates[t, u]
                f_g = gates[t, E + u]
                g_g = gates[t, 2 * E + u]
                o_g = gates[t, 3 * E + u]
                tc = tanh(c_all[t + 1, u])
                dcu = dc[u] + dhu * o_g * (1.0 - tc * tc)
                dpre[t, u] = dcu * g_g * i_g * (1.0 - i_g)
                dpre[t, E + u] = dcu * c_all[t, u] * f_g * (1.0 - f_g)
                dpre[t, 2 * E + u] = dcu * i_g * (1.0 - g_g * g_g)
                dpre[t, 3 * E + u] = dhu * tc * o_g * (1.0 - o_g)
                dc[u] = dcu * f_g
            for u in range(E):
                acc = 0.0
                for v in range(e4):
                    acc += dpre[t, v] * wh[u, v]
                dh[u] = acc
    return dpre


# ---------------------------------------------------------------------------
# transducer lattice dynamic program
# ---------------------------------------------------------------------------

def rnnt_forward(cnp.ndarray[cnp.float64_t, ndim=2] blank,
                 cnp.ndarray[cnp.float64_t, ndim=2] lab):
    cdef Py_ssize_t N = blank.shape[0]
    cdef Py_ssize_t K = blank.shape[1] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] alpha = np.full(
        (N + 1, K + 1), -np.inf)
    cdef Py_ssize_t i, j, r
    cdef double acc

    alpha[0, 0] = 0.0
    with nogil:
        for i in range(N + 1):
            for j in range(K + 1):
                if i == 0 and j == 0:
                    continue
                acc = -INFINITY
                if i > 0:
                    acc = alpha[i - 1, j] + blank[i - 1, j]
                if j > 0:
                    r = i if i < N else N - 1
                    acc = _logaddexp(acc, alpha[i, j - 1] + lab[r, j - 1])
                alpha[i, j] = acc
    return alpha, float(alpha[N, K])


def rnnt_backward(cnp.ndarray[cnp.float64_t, ndim=2] blank,
                  cnp.ndarray[cnp.float64_t, ndim=2] lab,
                  cnp.ndarray[cnp.float64_t, ndim=2] alpha,
                  double logZ):
    cdef Py_ssize_t N = blank.shape[0]
    cdef Py_ssize_t K = blank.shape[1] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] beta = np.full(
        (N + 1, K + 1), -np.inf)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dblank = np.empty_like(blank)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dlab = np.zeros_like(lab)
    cdef Py_ssize_t i, j, r
    cdef double acc

    beta[N, K] = 0.0
    with nogil:
        for i in range(N, -1, -1):
            for j in range(K, -1, -1):
                if i == N and j == K:
                    continue
                acc = -INFINITY
                if i < N:
                    acc = beta[i + 1, j] + blank[i, j]
                if j < K:
                    r = i if i < N else N - 1
                    acc = _logaddexp(acc, beta[i, j + 1] + lab[r, j])
                beta[i, j] = acc
        for i in range(N):
            for j in range(K + 1):
                dblank[i, j] = exp(
                    alpha[i, j] + blank[i, j] + beta[i + 1, j] - logZ)
        for i in range(N + 1):
            for j in range(K):
                r = i if i < N else N - 1
                dlab[r, j] += exp(
                    alpha[i, j] + lab[r, j] + beta[i, j + 1] - logZ)
    return dblank, dlab


# ---------------------------------------------------------------------------
# minimum-edit alignment
# ---------------------------------------------------------------------------

cdef void _edit_counts_one(const cnp.int64_t[:] ref, const cnp.int64_t[:] hyp,
                           cnp.int32_t[:, :] cost, cnp.int32_t[:, :] subs,
                           cnp.int64_t* out) nogil:
    """Min-cost, substitution-maximizing edit counts for one pair.

    Fills two DP grids (min cost; max substitutions among min-cost) and
    writes (cost, S, D, I) into out. D and I follow from cost, S, and the
    length difference, so no backtrack is needed.
    """
    cdef Py_ssize_t a = ref.shape[0]
    cdef Py_ssize_t b = hyp.shape[0]
    cdef Py_ssize_t i, j
    cdef cnp.int32_t m, bc, bs, c, s
    cdef cnp.int64_t ri
    for j in range(b + 1):
        cost[0, j] = <cnp.int32_t> j
        subs[0, j] = 0
    for i in range(a + 1):
        cost[i, 0] = <cnp.int32_t> i
        subs[i, 0] = 0
    for i in range(1, a + 1):
        ri = ref[i - 1]
        for j in range(1, b + 1):
            m = 1 if ri != hyp[j - 1] else 0
            bc = cost[i - 1, j - 1] + m
            bs = subs[i - 1, j - 1] + m
            c = cost[i, j - 1] + 1
            s = subs[i, j - 1]
            if c < bc or (c == bc and s > bs):
                bc = c
                bs = s
            c = cost[i - 1, j] + 1
            s = subs[i - 1, j]
            if c < bc or (c == bc and s > bs):
                bc = c
                bs = s
            cost[i, j] = bc
            subs[i, j] = bs
    out[0] = cost[a, b]
    out[1] = subs[a, b]
    out[2] = (out[0] - out[1] + (a - b)) // 2
    out[3] = out[0] - out[1] - out[2]


def edit_alignment(ref, hyp):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] r = np.ascontiguousarray(
        ref, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] h = np.ascontiguousarray(
        hyp, dtype=np.int64)
    cdef Py_ssize_t a = r.shape[0]
    cdef Py_ssize_t b = h.shape[0]
    cdef cnp.ndarray[cnp.int32_t, ndim=2] cost = np.empty(
        (a + 1, b + 1), dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=2] subs = np.empty(
        (a + 1, b + 1), dtype=np.int32)
    cdef cnp.int64_t out[4]
    _edit_counts_one(r, h, cost, subs, out)
    return int(out[0]), int(out[1]), int(out[2]), int(out[3])


def edit_counts_batch(refs, hyps):
    cdef cnp.ndarray[cnp.int64_t, ndim=2] r = np.ascontiguousarray(
        refs, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] h = np.ascontiguousarray(
        hyps, dtype=np.int64)
    cdef Py_ssize_t P = r.shape[0]
    cdef Py_ssize_t a = r.shape[1]
    cdef Py_ssize_t b = h.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out = np.empty((P, 3),
                                                         dtype=np.int64)
    cdef cnp.ndarray[cnp.int32_t, ndim=2] cost = np.empty(
        (a + 1, b + 1), dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=2] subs = np.empty(
        (a + 1, b + 1), dtype=np.int32)
    cdef cnp.int64_t res[4]
    cdef Py_ssize_t p
    cdef cnp.int64_t[:, :] rv = r
    cdef cnp.int64_t[:, :] hv = h
    cdef cnp.int32_t[:, :] cv = cost
    cdef cnp.int32_t[:, :] sv = subs
    cdef cnp.int64_t[:, :] ov = out
    with nogil:
        for p in range(P):
            _edit_counts_one(rv[p], hv[p], cv, sv, res)
            ov[p, 0] = res[1]
            ov[p, 1] = res[2]
            ov[p, 2] = res[3]
    return out
