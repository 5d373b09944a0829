"""Compiled inner loops.

The scalar APIs in :mod:`exp3` and :mod:`income` call the same helpers as the
episode loops below, so single steps and whole episodes perform identical
floating-point operations.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def tempered_softmax(S, gamma, eta, p):
    """Fill ``p`` with the tempered exponential-weights distribution over ``S``."""
    n = S.shape[0]
    m = S[0]
    for j in range(1, n):
        if S[j] > m:
            m = S[j]
    total = 0.0
    for j in range(n):
        p[j] = math.exp(eta * (S[j] - m))
        total += p[j]
    scale = (1.0 - gamma) / total
    floor = gamma / n
    for j in range(n):
        p[j] = p[j] * scale + floor


@njit(cache=True)
def inverse_cdf(p, A):
    """Largest ``k`` with ``p[0] + ... + p[k-1] <= A``."""
    last = p.shape[0] - 1
    k = 0
    c = p[0]
    while k < last and c <= A:
        k += 1
        c += p[k]
    return k


@njit(cache=True)
def welfare_update(S, k, x, d, inc):
    """Add ``x * d`` to arm ``k`` and ``inc`` to every arm below it."""
    S[k] += x * d
    for j in range(k):
        S[j] += inc


@njit(cache=True)
def exp3_episode(X, gamma, eta, lam, U, V, S, arms, outcomes):
    """Run the tempered Exp3 loop over draws ``U`` and valuations ``V``.

    ``S`` is updated in place; chosen arms and outcomes are written out.
    """
    K = X.shape[0] - 1
    p = np.empty(K + 1)
    for t in range(U.shape[0]):
        tempered_softmax(S, gamma, eta, p)
        k = inverse_cdf(p, U[t])
        arms[t] = k
        if X[k] <= V[t]:
            outcomes[t] = 1
            d = 1.0 / p[k]
            welfare_update(S, k, X[k], d, lam / K * d)
        else:
            outcomes[t] = 0


@njit(cache=True)
def monopoly_episode(X, gamma, eta, U, V, R, arms, outcomes):
    """Exp3 on importance-weighted revenue only, the posted-price baseline."""
    K = X.shape[0] - 1
    p = np.empty(K + 1)
    for t in range(U.shape[0]):
        tempered_softmax(R, gamma, eta, p)
        k = inverse_cdf(p, U[t])
        arms[t] = k
        if X[k] <= V[t]:
            outcomes[t] = 1
            R[k] += X[k] * (1.0 / p[k])
        else:
            outcomes[t] = 0


@njit(cache=True)
def income_episode(X, gamma, eta, A, wages, costs, brackets, weights, S, arms, outcomes):
    """Income-tax Exp3 loop.

    ``S`` has one row per wage bracket.  Only the arriving individual's bracket
    matters for the outcome, so only that row's distribution is evaluated;
    the coupled draw ``A[t]`` would pick comonotone arms in every other row.
    ``wages[t]`` is read only when the individual participates.
    """
    K = X.shape[0] - 1
    p = np.empty(K + 1)
    for t in range(A.shape[0]):
        b = brackets[t]
        row = S[b]
        tempered_softmax(row, gamma, eta, p)
        k = inverse_cdf(p, A[t])
        arms[t] = k
        w = wages[t]
        if costs[t] <= w * (1.0 - X[k]):
            outcomes[t] = 1
            d = w / p[k]
            welfare_update(row, k, X[k], d, weights[t] / K * d)
        else:
            outcomes[t] = 0


# ---------------------------------------------------------------------------
# dyadic search

_TARGET_L, _TARGET_C, _TARGET_R, _TARGET_LC, _TARGET_CR = 0, 1, 2, 3, 4


@njit(cache=True)
def _point_width(x, n, log_term):
    if n == 0:
        return math.inf
    return x * math.sqrt(log_term / (2.0 * n))


@njit(cache=True)
def _interval_width(w1, w2, n, lam, log_term):
    return lam * (w2 - w1) * (math.sqrt(log_term / (2.0 * (n + 1))) + 2.0 / (n + 1))


@njit(cache=True)
def _is_power_of_two(m):
    return m > 0 and (m & (m - 1)) == 0


@njit(cache=True)
def dyadic_episode(V, lam, log_term, xs, ys, epoch_start, epoch_lo, epoch_hi):
    """Dyadic search over valuations ``V``.

    Writes sampled policies and outcomes, and for every epoch its first
    round and active interval.  Returns ``(n_epochs, lo, hi)`` where
    ``[lo, hi]`` is the interval in force after the last round.
    """
    T = V.shape[0]
    # statistics of every sampled point, keyed by the exact float
    index = dict()
    index[-1.0] = 0
    counts = np.zeros(T + 1, dtype=np.int64)
    sums = np.zeros(T + 1, dtype=np.int64)
    n_points = 1

    lo, hi = 0.0, 1.0
    tau = 0
    t = 0
    while t < T:
        tau += 1
        epoch_start[tau - 1] = t
        epoch_lo[tau - 1] = lo
        epoch_hi[tau - 1] = hi
        c = (lo + hi) / 2.0
        d = hi - lo
        off = d / 4.0 if tau % 2 == 1 else d / 6.0
        pts = np.array([c - off, c, c + off])
        pn = np.zeros(3, dtype=np.int64)
        ps = np.zeros(3, dtype=np.int64)
        for j in range(3):
            if pts[j] in index:
                i = index[pts[j]]
                pn[j] = counts[i]
                ps[j] = sums[i]
        # interval logs: raw count and sum, truncated count and sum
        raw_n = np.zeros(2, dtype=np.int64)
        raw_s = np.zeros(2, dtype=np.int64)
        tr_n = np.zeros(2, dtype=np.int64)
        tr_s = np.zeros(2, dtype=np.int64)
        kk = np.zeros(2, dtype=np.int64)
        for i in range(t):
            for j in range(2):
                if pts[j] < xs[i] < pts[j + 1]:
                    raw_n[j] += 1
                    raw_s[j] += ys[i]
                    if _is_power_of_two(raw_n[j] + 1):
                        tr_n[j] = raw_n[j]
                        tr_s[j] = raw_s[j]

        while t < T:
            # choose a target by the largest half-width, ties in listed order
            best = -1.0
            target = 0
            for j in range(5):
                if j < 3:
                    g = _point_width(pts[j], pn[j], log_term)
                else:
                    g = _interval_width(pts[j - 3], pts[j - 2], tr_n[j - 3], lam, log_term)
                if g > best:
                    best = g
                    target = j
            if target < 3:
                x = pts[target]
            else:
                j = target - 3
                w1 = pts[j]
                w2 = pts[j + 1]
                x = w1 + (w2 - w1) * ((kk[j] + 0.5) / (tr_n[j] + 1))
                kk[j] = (kk[j] + 1) % (tr_n[j] + 1)
            y = 1 if x <= V[t] else 0
            xs[t] = x
            ys[t] = y
            t += 1

            if x in index:
                i = index[x]
            else:
                i = n_points
                index[x] = i
                n_points += 1
            counts[i] += 1
            sums[i] += y
            for j in range(3):
                if pts[j] == x:
                    pn[j] += 1
                    ps[j] += y
            for j in range(2):
                if pts[j] < x < pts[j + 1]:
                    raw_n[j] += 1
                    raw_s[j] += y
                    if _is_power_of_two(raw_n[j] + 1):
                        tr_n[j] = raw_n[j]
                        tr_s[j] = raw_s[j]

            # confidence intervals on welfare differences
            gp = np.empty(3)
            dh = np.empty(3)
            for j in range(3):
                gp[j] = _point_width(pts[j], pn[j], log_term)
                dh[j] = ps[j] / pn[j] if pn[j] > 0 else 0.0
            gi = np.empty(2)
            delta = np.empty(2)
            for j in range(2):
                gi[j] = _interval_width(pts[j], pts[j + 1], tr_n[j], lam, log_term)
                dint = tr_s[j] / (tr_n[j] + 1)
                delta[j] = (pts[j + 1] * dh[j + 1] - pts[j] * dh[j]
                            - lam * (pts[j + 1] - pts[j]) * dint)
            h_lc = gp[1] + gp[0] + gi[0]
            h_cr = gp[2] + gp[1] + gi[1]
            h_lr = gp[2] + gp[0] + gi[0] + gi[1]
            d_lr = delta[0] + delta[1]
            if delta[0] - h_lc >= 0.0 or d_lr - h_lr >= 0.0:
                lo = max(lo, pts[0])
                break
            if delta[1] + h_cr <= 0.0 or d_lr + h_lr <= 0.0:
                hi = min(hi, pts[2])
                break
    return tau, lo, hi


# ---------------------------------------------------------------------------
# best constant policy on prefixes


@njit(cache=True)
def prefix_sup(v, w, pos, checkpoints, lam, out):
    """Best constant cumulative welfare over the first ``t`` rounds for each checkpoint.

    ``v`` holds candidate values sorted ascending, ``w`` their weights and
    ``pos`` their round index (0-based).  For each ``t`` a reverse scan
    accumulates the weight and weighted value of entries at or above each
    candidate; the first entry of a tie group sees the whole group.
    """
    n = v.shape[0]
    for i in range(checkpoints.shape[0]):
        t = checkpoints[i]
        mass = 0.0
        base = 0.0
        best = 0.0
        for j in range(n - 1, -1, -1):
            if pos[j] < t:
                mass += w[j]
                base += w[j] * v[j]
            x = v[j]
            if x >= 0.0:
                val = x * mass + lam * (base - x * mass)
                if val > best:
                    best = val
        # x = 0 collects the surplus of every nonnegative entry
        if lam * base > best:
            best = lam * base
        out[i] = best
