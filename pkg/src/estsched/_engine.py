"""Compiled event loop for the preemptive least-rank M/G/1 queue.

Queued jobs do not age, so their ranks are frozen while they wait.  They sit
in a binary heap keyed by (rank, right slope, arrival index).  The served
set is either one job, or several jobs of equal rank whose ranks are all
rising: serving any one of those alone would hand priority to another after
zero time, so they share the server equally and their common rank rises at
rate 1/k.
"""

import math

import numpy as np
from numba import njit

from .policy import SRPT_B, next_kink, rank_value, slope_value

OK = 0
UNSTABLE = 1
STALLED = 2
DRAINED = 3  # arrival stream ran out before every measured job finished


@njit(cache=True, nogil=True)
def _less(r1, g1, q1, r2, g2, q2):
    if r1 != r2:
        return r1 < r2
    if g1 != g2:
        return g1 < g2
    return q1 < q2


@njit(cache=True, nogil=True)
def _push(h_rank, h_slope, h_job, n, r, g, j):
    i = n
    h_rank[i] = r
    h_slope[i] = g
    h_job[i] = j
    while i > 0:
        p = (i - 1) >> 1
        if _less(h_rank[i], h_slope[i], h_job[i], h_rank[p], h_slope[p], h_job[p]):
            h_rank[i], h_rank[p] = h_rank[p], h_rank[i]
            h_slope[i], h_slope[p] = h_slope[p], h_slope[i]
            h_job[i], h_job[p] = h_job[p], h_job[i]
            i = p
        else:
            break
    return n + 1


@njit(cache=True, nogil=True)
def _pop(h_rank, h_slope, h_job, n):
    j = h_job[0]
    n -= 1
    h_rank[0] = h_rank[n]
    h_slope[0] = h_slope[n]
    h_job[0] = h_job[n]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= n:
            break
        c = left
        right = left + 1
        if right < n and _less(h_rank[right], h_slope[right], h_job[right],
                               h_rank[left], h_slope[left], h_job[left]):
            c = right
        if _less(h_rank[c], h_slope[c], h_job[c], h_rank[i], h_slope[i], h_job[i]):
            h_rank[i], h_rank[c] = h_rank[c], h_rank[i]
            h_slope[i], h_slope[c] = h_slope[c], h_slope[i]
            h_job[i], h_job[c] = h_job[c], h_job[i]
            i = c
        else:
            break
    return j, n


@njit(cache=True, nogil=True)
def _bin_index(thresholds, x):
    # first index with thresholds[i] >= x; len(thresholds) if none
    lo = 0
    hi = thresholds.shape[0]
    while lo < hi:
        mid = (lo + hi) >> 1
        if thresholds[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True, nogil=True)
def simulate(code, arrivals, sizes, estimates, warmup, n_measured, thresholds,
             queue_cap, max_stall):
    """Run one replication.

    Jobs [warmup, n_measured) are measured; arrivals beyond n_measured keep
    the load on until those jobs finish.  Returns (status, first_service,
    completion, busy_in_window, work_sums, n_samples, bad_preemptions).
    work_sums[k, i] accumulates, over post-warmup arrival epochs, the
    remaining work of jobs whose key k is <= thresholds[i], with keys
    remsize, scaled estimated remsize, size, estimated size.
    """
    n_total = arrivals.shape[0]
    first = np.full(n_total, -1.0)
    done = np.full(n_total, -1.0)
    age = np.zeros(n_total)
    rank = np.zeros(n_total)
    slope = np.zeros(n_total)

    cap = min(n_total, queue_cap) + 1
    h_rank = np.empty(cap)
    h_slope = np.empty(cap)
    h_job = np.empty(cap, dtype=np.int64)
    nh = 0
    group = np.empty(cap, dtype=np.int64)
    k = 0

    n_thr = thresholds.shape[0]
    sums = np.zeros((4, n_thr + 1))
    n_samples = 0
    bad = 0

    w0 = arrivals[warmup]
    w1 = arrivals[n_measured - 1]
    busy = 0.0

    in_group = np.zeros(n_total, dtype=np.bool_)
    prev = np.empty(cap, dtype=np.int64)

    t = 0.0
    nxt = 0
    remaining = n_measured - warmup
    stall = 0
    status = OK
    drained = False

    while remaining > 0:
        ta = arrivals[nxt] if nxt < n_total else math.inf
        if k == 0 and nh == 0:
            if nxt >= n_total:
                drained = True
                break
            t = ta
        # ---- horizon to the next event
        d = ta - t
        ev = 0  # 0 arrival, 1 completion, 2 kink, 3 crossing
        who = -1
        target = 0.0
        if k > 0:
            fk = float(k)
            for m in range(k):
                j = group[m]
                dc = (sizes[j] - age[j]) * fk
                if dc <= d:
                    d = dc
                    ev = 1
                    who = m
            for m in range(k):
                j = group[m]
                nk = next_kink(code, sizes[j], estimates[j], age[j])
                if nk < math.inf:
                    dk = (nk - age[j]) * fk
                    if dk < d:
                        d = dk
                        ev = 2
                        who = m
                        target = nk
            g = slope[group[0]]
            capped = False
            if code == SRPT_B and nh > 0:
                # a capped rank cannot pass a level at or above its cap; the
                # cap kink fires first even when rounding says otherwise
                for m in range(k):
                    if h_rank[0] >= estimates[group[m]]:
                        capped = True
            if g > 0.0 and nh > 0 and not capped:
                dx = (h_rank[0] - rank[group[0]]) * fk / g
                if dx < 0.0:
                    dx = 0.0
                if dx < d:
                    d = dx
                    ev = 3
        if d < 0.0:
            d = 0.0
        # ---- advance the clock
        if k > 0:
            share = d / k
            for m in range(k):
                j = group[m]
                age[j] += share
                rank[j] += slope[j] * share
            lo = t if t > w0 else w0
            hi = t + d if t + d < w1 else w1
            if hi > lo:
                busy += hi - lo
        t = t + d
        if d == 0.0:
            stall += 1
            if stall > max_stall:
                status = STALLED
                break
        else:
            stall = 0

        if ev == 0:
            j = nxt
            nxt += 1
            if nxt >= n_total:
                drained = True
            if nh + k + 1 > queue_cap:
                status = UNSTABLE
                break
            if n_thr > 0 and j >= warmup and j < n_measured:
                # PASTA: the arriving job sees the time-average state
                n_samples += 1
                for m in range(k + nh):
                    i = group[m] if m < k else h_job[m - k]
                    rem = sizes[i] - age[i]
                    keys = (rem, (estimates[i] / sizes[i]) * rem, sizes[i], estimates[i])
                    for kk in range(4):
                        sums[kk, _bin_index(thresholds, keys[kk])] += rem
            r0 = rank_value(code, sizes[j], estimates[j], 0.0)
            g0 = slope_value(code, sizes[j], estimates[j], 0.0)
            rank[j] = r0
            slope[j] = g0
            if k == 0:
                group[0] = j
                k = 1
                first[j] = t
                continue
            gr = rank[group[0]]
            gs = slope[group[0]]
            if r0 < gr or (r0 == gr and g0 < gs):
                for m in range(k):
                    i = group[m]
                    nh = _push(h_rank, h_slope, h_job, nh, rank[i], slope[i], i)
                group[0] = j
                k = 1
                first[j] = t
            else:
                nh = _push(h_rank, h_slope, h_job, nh, r0, g0, j)
            continue

        preempt = False
        if ev == 1:
            j = group[who]
            age[j] = sizes[j]
            done[j] = t
            if j >= warmup and j < n_measured:
                remaining -= 1
            group[who] = group[k - 1]
            k -= 1
        elif ev == 2:
            j = group[who]
            age[j] = target  # land exactly on the kink
            rank[j] = rank_value(code, sizes[j], estimates[j], target)
            slope[j] = slope_value(code, sizes[j], estimates[j], target)
            preempt = True
        else:
            level = h_rank[0]
            for m in range(k):
                rank[group[m]] = level
            preempt = True

        # ---- re-dispatch: return the served set to the heap, take the best
        n_prev = 0
        if preempt:
            for m in range(k):
                i = group[m]
                prev[n_prev] = i
                n_prev += 1
                nh = _push(h_rank, h_slope, h_job, nh, rank[i], slope[i], i)
            k = 0
        if k == 0 and nh > 0:
            j, nh = _pop(h_rank, h_slope, h_job, nh)
            group[0] = j
            k = 1
            if slope[j] > 0.0:
                while nh > 0 and h_rank[0] == rank[j] and h_slope[0] == slope[j]:
                    i, nh = _pop(h_rank, h_slope, h_job, nh)
                    group[k] = i
                    k += 1
            for m in range(k):
                i = group[m]
                in_group[i] = True
                if first[i] < 0.0:
                    first[i] = t
            # a started job lost the server to one that was already waiting
            # when it first started
            lead_arrival = arrivals[group[0]]
            for m in range(n_prev):
                i = prev[m]
                if not in_group[i] and lead_arrival < first[i]:
                    bad += 1
            for m in range(k):
                in_group[group[m]] = False

    if status == OK and drained:
        status = DRAINED
    return status, first, done, busy, sums[:, :n_thr], n_samples, bad
