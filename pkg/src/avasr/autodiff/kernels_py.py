"""Reference kernels for the sequential hot loops, in plain numpy.

These are the fallback implementations selected when the compiled extension
is unavailable, and the ground truth the compiled kernels are tested against.
Clarity is the priority here; the compiled twin in ``_speedups.pyx`` mirrors
this file loop for loop.

All kernels are float64-only.  Gate layout for the LSTM is [input, forget,
cell, output] along the 4E axis.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# LSTM recurrence
# ---------------------------------------------------------------------------

def lstm_forward(xw: np.ndarray, wh: np.ndarray):
    """Run the LSTM time loop.

    xw: (T, 4E) input projections including bias; wh: (E, 4E) recurrent
    weights.  Initial hidden and cell state are zero.  Returns
    (h_seq (T, E), gates (T, 4E) post-activation, c_all (T+1, E)).
    """
    T, e4 = xw.shape
    E = e4 // 4
    h_seq = np.empty((T, E))
    gates = np.empty((T, e4))
    c_all = np.zeros((T + 1, E))
    h = np.zeros(E)
    for t in range(T):
        pre = xw[t] + h @ wh
        i = _sigmoid(pre[:E])
        f = _sigmoid(pre[E:2 * E])
        g = np.tanh(pre[2 * E:3 * E])
        o = _sigmoid(pre[3 * E:])
        c = f * c_all[t] + i * g
        h = o * np.tanh(c)
        gates[t, :E] = i
        gates[t, E:2 * E] = f
        gates[t, 2 * E:3 * E] = g
        gates[t, 3 * E:] = o
        c_all[t + 1] = c
        h_seq[t] = h
    return h_seq, gates, c_all


def lstm_backward(wh: np.ndarray, gates: np.ndarray, c_all: np.ndarray,
                  g_h: np.ndarray) -> np.ndarray:
    """Reverse LSTM time loop.

    g_h: (T, E) upstream gradient on every hidden state.  Returns the
    gradient on the pre-activation gates, shape (T, 4E); the caller turns
    that into weight/input gradients with dense matmuls.
    """
    T, e4 = gates.shape
    E = e4 // 4
    dpre = np.empty((T, e4))
    dh = np.zeros(E)
    dc = np.zeros(E)
    whT = wh.T
    for t in range(T - 1, -1, -1):
        dh = dh + g_h[t]
        i = gates[t, :E]
        f = gates[t, E:2 * E]
        g = gates[t, 2 * E:3 * E]
        o = gates[t, 3 * E:]
        tc = np.tanh(c_all[t + 1])
        dc = dc + dh * o * (1.0 - tc * tc)
        dpre[t, :E] = dc * g * i * (1.0 - i)
        dpre[t, E:2 * E] = dc * c_all[t] * f * (1.0 - f)
        dpre[t, 2 * E:3 * E] = dc * i * (1.0 - g * g)
        dpre[t, 3 * E:] = dh * tc * o * (1.0 - o)
        dh = dpre[t] @ whT
        dc = dc * f
    return dpre


# ---------------------------------------------------------------------------
# transducer lattice dynamic program
# ---------------------------------------------------------------------------

def rnnt_forward(blank: np.ndarray, lab: np.ndarray):
    """Forward pass over the monotone alignment lattice.

    blank: (N, K+1) log-probabilities of emitting blank at grid point (i, j);
    lab: (N, K) log-probabilities of emitting label j+1 from encoder row i.
    A label move from column i = N reuses row N-1 (row index clamped).
    Returns (alpha (N+1, K+1), logZ) where alpha[i, j] is the log-sum over
    all monotone paths from (0, 0) to (i, j) and logZ = alpha[N, K].
    """
    N, K1 = blank.shape
    K = K1 - 1
    alpha = np.full((N + 1, K + 1), -np.inf)
    alpha[0, 0] = 0.0
    for i in range(N + 1):
        for j in range(K + 1):
            if i == 0 and j == 0:
                continue
            acc = -np.inf
            if i > 0:
                acc = alpha[i - 1, j] + blank[i - 1, j]
            if j > 0:
                r = min(i, N - 1)
                acc = np.logaddexp(acc, alpha[i, j - 1] + lab[r, j - 1])
            alpha[i, j] = acc
    return alpha, float(alpha[N, K])


def rnnt_backward(blank: np.ndarray, lab: np.ndarray,
                  alpha: np.ndarray, logZ: float):
    """Occupancy gradients of logZ w.r.t. the lattice entries actually used.

    Returns (dblank (N, K+1), dlab (N, K)); dlab accumulates the clamped-row
    label edges (both i = N-1 and i = N land in row N-1).
    """
    N, K1 = blank.shape
    K = K1 - 1
    beta = np.full((N + 1, K + 1), -np.inf)
    beta[N, K] = 0.0
    for i in range(N, -1, -1):
        for j in range(K, -1, -1):
            if i == N and j == K:
                continue
            acc = -np.inf
            if i < N:
                acc = beta[i + 1, j] + blank[i, j]
            if j < K:
                r = min(i, N - 1)
                acc = np.logaddexp(acc, beta[i, j + 1] + lab[r, j])
            beta[i, j] = acc
    dblank = np.empty_like(blank)
    for i in range(N):
        for j in range(K + 1):
            dblank[i, j] = np.exp(
                alpha[i, j] + blank[i, j] + beta[i + 1, j] - logZ)
    dlab = np.zeros_like(lab)
    for i in range(N + 1):
        for j in range(K):
            r = min(i, N - 1)
            dlab[r, j] += np.exp(
                alpha[i, j] + lab[r, j] + beta[i, j + 1] - logZ)
    return dblank, dlab


# ---------------------------------------------------------------------------
# minimum-edit alignment
# ---------------------------------------------------------------------------

def edit_alignment(ref: np.ndarray, hyp: np.ndarray):
    """Minimum-edit counts with unit costs.

    ref, hyp: integer id sequences.  Returns (cost, S, D, I).  Among all
    minimum-cost alignments the one with the most substitutions is
    reported (substitution preferred over paired insert+delete).  That
    pins the triple uniquely: D - I always equals len(ref) - len(hyp), so
    cost and S determine D and I.  It also makes the counts symmetric:
    swapping the arguments swaps D and I and preserves S.
    """
    ref = np.asarray(ref, dtype=np.int64)
    hyp = np.asarray(hyp, dtype=np.int64)
    a, b = len(ref), len(hyp)
    # cost: min edit distance; subs: max substitutions among min-cost
    cost = np.empty((a + 1, b + 1), dtype=np.int64)
    subs = np.zeros((a + 1, b + 1), dtype=np.int64)
    cost[0, :] = np.arange(b + 1)
    cost[:, 0] = np.arange(a + 1)
    for i in range(1, a + 1):
        ri = ref[i - 1]
        for j in range(1, b + 1):
            m = 1 if ri != hyp[j - 1] else 0
            bc = cost[i - 1, j - 1] + m
            bs = subs[i - 1, j - 1] + m
            c = cost[i, j - 1] + 1
            s = subs[i, j - 1]
            if c < bc or (c == bc and s > bs):
                bc, bs = c, s
            c = cost[i - 1, j] + 1
            s = subs[i - 1, j]
            if c < bc or (c == bc and s > bs):
                bc, bs = c, s
            cost[i, j] = bc
            subs[i, j] = bs
    c = int(cost[a, b])
    s = int(subs[a, b])
    d = (c - s + (a - b)) // 2
    return c, s, d, c - s - d


def edit_counts_batch(refs: np.ndarray, hyps: np.ndarray) -> np.ndarray:
    """Vectorized edit counts for P pairs of fixed lengths.

    refs: (P, a) int array; hyps: (P, b).  Returns (P, 3) int64 [S, D, I]
    under the same substitution-maximizing rule as ``edit_alignment``.
    The dynamic program walks the (a+1)x(b+1) grid with the pair axis
    vectorized; memory stays at two grid rows of per-pair vectors.
    """
    refs = np.asarray(refs, dtype=np.int32)
    hyps = np.asarray(hyps, dtype=np.int32)
    P, a = refs.shape
    _, b = hyps.shape
    cols = np.arange(b + 1, dtype=np.int32)
    cost = np.repeat(cols[:, None], P, axis=1)  # row i=0: j insertions
    subs = np.zeros((b + 1, P), dtype=np.int32)
    for i in range(1, a + 1):
        r = refs[:, i - 1]
        prev_cost, prev_subs = cost, subs
        cost = np.empty_like(prev_cost)
        subs = np.empty_like(prev_subs)
        cost[0] = i
        subs[0] = 0
        for j in range(1, b + 1):
            mismatch = (r != hyps[:, j - 1]).astype(np.int32)
            bc = prev_cost[j - 1] + mismatch
            bs = prev_subs[j - 1] + mismatch
            for c, s in ((cost[j - 1] + 1, subs[j - 1]),
                         (prev_cost[j] + 1, prev_subs[j])):
                better = (c < bc) | ((c == bc) & (s > bs))
                bc = np.where(better, c, bc)
                bs = np.where(better, s, bs)
            cost[j] = bc
            subs[j] = bs
    c = cost[b].astype(np.int64)
    s = subs[b].astype(np.int64)
    d = (c - s + (a - b)) // 2
    return np.stack([s, d, c - s - d], axis=1)
