"""Compiled inner loops.

These mirror the pure-Python definitions in :mod:`snmlm.adjustment` and
:mod:`snmlm.training`; the tests check both routes against each other.
``H`` is the tuple ``(feat, ftype, target, fc, pc)`` of descriptor hashes.
"""

import numpy as np
from numba import njit, prange, uint64

_GOLDEN = uint64(0x9E3779B97F4A7C15)
_MIX1 = uint64(0xBF58476D1CE4E5B9)
_MIX2 = uint64(0x94D049BB133111EB)

F_FEAT, F_TYPE, F_FC, F_TGT, F_PC, F_DFC, F_DPC = 1, 2, 4, 8, 16, 32, 64
MAX_ELEMENTS = 7


@njit(cache=True, inline="always")
def splitmix64(x):
    z = x + _GOLDEN
    z = (z ^ (z >> uint64(30))) * _MIX1
    z = (z ^ (z >> uint64(27))) * _MIX2
    return z ^ (z >> uint64(31))


@njit(cache=True)
def _push_count(c, double, table, eh, ew, n):
    floor = 0
    v = c
    while v > 1:
        v >>= 1
        floor += 1
    if double and (c & (c - 1)) != 0:
        phi = np.log2(float(c)) - floor
        eh[n] = table[floor]
        ew[n] = 1.0 - phi
        eh[n + 1] = table[floor + 1]
        ew[n + 1] = phi
        return n + 2
    eh[n] = table[floor]
    ew[n] = 1.0
    return n + 1


@njit(cache=True)
def conjunctions(i, j, fcount, pcount, flags, h0, H, eh, ew, hs, ws):
    """Fill hs/ws with the hash and weight of every conjunction; returns count.

    Entry m (1 <= m < 2**n) is the subset of descriptors given by the bits
    of m; the highest descriptor is folded last, so each hash extends the
    hash of m without its top bit.
    """
    n = 0
    if flags & F_FEAT:
        eh[n] = H[0][i]
        ew[n] = 1.0
        n += 1
    if flags & F_TYPE:
        eh[n] = H[1][i]
        ew[n] = 1.0
        n += 1
    if flags & F_FC:
        n = _push_count(fcount, flags & F_DFC, H[3], eh, ew, n)
    if flags & F_TGT:
        eh[n] = H[2][j]
        ew[n] = 1.0
        n += 1
    if flags & F_PC:
        n = _push_count(pcount, flags & F_DPC, H[4], eh, ew, n)
    total = 1 << n
    hs[0] = h0
    ws[0] = 1.0
    top = 0
    for m in range(1, total):
        if m >= (2 << top):
            top += 1
        prev = m ^ (1 << top)
        hs[m] = splitmix64(hs[prev] ^ eh[top])
        ws[m] = ws[prev] * ew[top]
    return total


@njit(cache=True)
def pair_adjustment(i, j, fcount, pcount, flags, h0, H, theta, mask, eh, ew, hs, ws):
    total = conjunctions(i, j, fcount, pcount, flags, h0, H, eh, ew, hs, ws)
    a = 0.0
    for m in range(1, total):
        a += ws[m] * theta[hs[m] & mask]
    return a


@njit(cache=True)
def pair_apply(i, j, fcount, pcount, flags, h0, H, out, mask, scale, eh, ew, hs, ws):
    """out[slot] += scale * weight for every conjunction of the pair."""
    total = conjunctions(i, j, fcount, pcount, flags, h0, H, eh, ew, hs, ws)
    for m in range(1, total):
        out[hs[m] & mask] += scale * ws[m]


@njit(cache=True)
def _scratch():
    size = 1 << MAX_ELEMENTS
    return (
        np.empty(MAX_ELEMENTS, dtype=np.uint64),
        np.empty(MAX_ELEMENTS, dtype=np.float64),
        np.empty(size, dtype=np.uint64),
        np.empty(size, dtype=np.float64),
    )


@njit(cache=True)
def slot_list(i, j, fcount, pcount, flags, h0, H, mask):
    eh, ew, hs, ws = _scratch()
    total = conjunctions(i, j, fcount, pcount, flags, h0, H, eh, ew, hs, ws)
    slots = np.empty(total - 1, dtype=np.int64)
    weights = np.empty(total - 1, dtype=np.float64)
    for m in range(1, total):
        slots[m - 1] = hs[m] & mask
        weights[m - 1] = ws[m]
    return slots, weights


@njit(cache=True)
def entries(indptr, targets, counts, totals, flags, h0, H, theta, mask):
    """M_ij for every stored pair."""
    eh, ew, hs, ws = _scratch()
    out = np.empty(len(counts), dtype=np.float64)
    for i in range(len(indptr) - 1):
        tot = totals[i]
        for k in range(indptr[i], indptr[i + 1]):
            a = pair_adjustment(i, targets[k], tot, counts[k], flags, h0, H, theta, mask, eh, ew, hs, ws)
            out[k] = np.exp(a) * counts[k] / tot
    return out


@njit(cache=True)
def row_sums(indptr, targets, counts, totals, flags, h0, H, theta, mask):
    eh, ew, hs, ws = _scratch()
    n = len(indptr) - 1
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        tot = totals[i]
        s = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            a = pair_adjustment(i, targets[k], tot, counts[k], flags, h0, H, theta, mask, eh, ew, hs, ws)
            s += np.exp(a) * counts[k]
        out[i] = s / tot
    return out


@njit(cache=True)
def find_pair(indptr, targets, i, j):
    lo = indptr[i]
    hi = indptr[i + 1]
    while lo < hi:
        mid = (lo + hi) >> 1
        if targets[mid] < j:
            lo = mid + 1
        else:
            hi = mid
    if lo < indptr[i + 1] and targets[lo] == j:
        return lo
    return -1


@njit(cache=True)
def _event_step(e, ptr, feats, ev_targets, indptr, targets, counts, totals, flags, h0, H,
                theta, mask, out, scale, loo, buf_m, buf_a, eh, ew, hs, ws):
    """Gradient of one event applied as out[slot] += scale * weight * g.

    All per-pair gradients are computed from `theta` before any update.
    Returns log(y_target), or nan when the event has no learnable pair.
    """
    lo = ptr[e]
    hi = ptr[e + 1]
    j = ev_targets[e]
    y = 0.0
    for p in range(lo, hi):
        i = feats[p]
        k = find_pair(indptr, targets, i, j)
        c_ij = counts[k] if k >= 0 else 0
        c_i = totals[i]
        buf_m[p - lo] = 0.0
        buf_a[p - lo] = 0.0
        if c_ij == 0:
            continue
        if loo:
            if c_i < 2:
                continue
            if c_ij >= 2:
                a = pair_adjustment(i, j, c_i - 1, c_ij - 1, flags, h0, H, theta, mask, eh, ew, hs, ws)
                buf_m[p - lo] = np.exp(a) * (c_ij - 1) / (c_i - 1)
            if c_i > c_ij:
                a = pair_adjustment(i, j, c_i - 1, c_ij, flags, h0, H, theta, mask, eh, ew, hs, ws)
                buf_a[p - lo] = (c_i - c_ij) / (c_i - 1) * np.exp(a)
        else:
            a = pair_adjustment(i, j, c_i, c_ij, flags, h0, H, theta, mask, eh, ew, hs, ws)
            buf_m[p - lo] = np.exp(a) * c_ij / c_i
        y += buf_m[p - lo]
    for p in range(lo, hi):
        i = feats[p]
        c_i = totals[i]
        if loo:
            if buf_a[p - lo] == 0.0 and buf_m[p - lo] == 0.0:
                continue
            k = find_pair(indptr, targets, i, j)
            c_ij = counts[k]
            if buf_a[p - lo] != 0.0:
                pair_apply(i, j, c_i - 1, c_ij, flags, h0, H, out, mask, scale * buf_a[p - lo],
                           eh, ew, hs, ws)
            if buf_m[p - lo] != 0.0:
                g = buf_m[p - lo] * (1.0 - 1.0 / y)
                pair_apply(i, j, c_i - 1, c_ij - 1, flags, h0, H, out, mask, scale * g,
                           eh, ew, hs, ws)
        else:
            if buf_m[p - lo] == 0.0:
                continue
            k = find_pair(indptr, targets, i, j)
            c_ij = counts[k]
            g = buf_m[p - lo] * (c_i / c_ij - 1.0 / y)
            pair_apply(i, j, c_i, c_ij, flags, h0, H, out, mask, scale * g, eh, ew, hs, ws)
    if y > 0.0:
        return np.log(y)
    return np.nan


@njit(cache=True)
def run_events(order, ptr, feats, ev_targets, indptr, targets, counts, totals, flags, h0, H,
               theta, mask, out, scale, loo):
    """Apply the events in `order` sequentially; returns sum of log y_target."""
    eh, ew, hs, ws = _scratch()
    width = 1
    for e in range(len(ev_targets)):
        width = max(width, ptr[e + 1] - ptr[e])
    buf_m = np.empty(width, dtype=np.float64)
    buf_a = np.empty(width, dtype=np.float64)
    total = 0.0
    for n in range(len(order)):
        ly = _event_step(order[n], ptr, feats, ev_targets, indptr, targets, counts, totals,
                         flags, h0, H, theta, mask, out, scale, loo, buf_m, buf_a,
                         eh, ew, hs, ws)
        if not np.isnan(ly):
            total += ly
    return total


@njit(cache=True, parallel=True)
def run_events_hogwild(order, bounds, ptr, feats, ev_targets, indptr, targets, counts, totals,
                       flags, h0, H, theta, mask, scale, loo):
    """Lock-free variant: shard w applies order[bounds[w]:bounds[w+1]] to theta."""
    nshards = len(bounds) - 1
    width = 1
    for e in range(len(ev_targets)):
        width = max(width, ptr[e + 1] - ptr[e])
    partial = np.zeros(nshards, dtype=np.float64)
    for w in prange(nshards):
        eh, ew, hs, ws = _scratch()
        buf_m = np.empty(width, dtype=np.float64)
        buf_a = np.empty(width, dtype=np.float64)
        acc = 0.0
        for n in range(bounds[w], bounds[w + 1]):
            ly = _event_step(order[n], ptr, feats, ev_targets, indptr, targets, counts, totals,
                             flags, h0, H, theta, mask, theta, scale, loo, buf_m, buf_a,
                             eh, ew, hs, ws)
            if not np.isnan(ly):
                acc += ly
        partial[w] = acc
    return partial.sum()


@njit(cache=True)
def score_events(ptr, feats, ev_targets, indptr, targets, counts, totals, row_sum, flags, h0, H,
                 theta, mask, floor):
    """P(target | features) per event via the precomputed row sums.

    Events with a zero denominator get `floor` and are flagged.
    """
    eh, ew, hs, ws = _scratch()
    n = len(ev_targets)
    probs = np.empty(n, dtype=np.float64)
    flagged = np.zeros(n, dtype=np.bool_)
    for e in range(n):
        j = ev_targets[e]
        y = 0.0
        denom = 0.0
        for p in range(ptr[e], ptr[e + 1]):
            i = feats[p]
            denom += row_sum[i]
            k = find_pair(indptr, targets, i, j)
            if k >= 0:
                a = pair_adjustment(i, j, totals[i], counts[k], flags, h0, H, theta, mask,
                                    eh, ew, hs, ws)
                y += np.exp(a) * counts[k] / totals[i]
        if denom > 0.0:
            probs[e] = y / denom
        else:
            probs[e] = floor
            flagged[e] = True
    return probs, flagged
