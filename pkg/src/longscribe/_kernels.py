"""Compiled dynamic-programming kernels for word alignment.

All kernels work on integer word ids and share one tie-break rule when
reconstructing the alignment from the end: diagonal (match, then
substitution) before deletion before insertion. Counts are returned as
``(substitutions, insertions, deletions, matches)``.
"""
import numpy as np
from numba import njit

DIAG, DELETE, INSERT = 0, 1, 2


@njit(cache=True)
def levenshtein_cost(a, b):
    n, m = len(a), len(b)
    prev = np.arange(m + 1, dtype=np.int64)
    cur = np.empty(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        cur[0] = i
        ai = a[i - 1]
        for j in range(1, m + 1):
            best = prev[j - 1] + (0 if ai == b[j - 1] else 1)
            v = prev[j] + 1
            if v < best:
                best = v
            v = cur[j - 1] + 1
            if v < best:
                best = v
            cur[j] = best
        prev, cur = cur, prev
    return prev[m]


@njit(cache=True)
def levenshtein_counts(a, b):
    n, m = len(a), len(b)
    direction = np.empty((n + 1, m + 1), dtype=np.uint8)
    prev = np.arange(m + 1, dtype=np.int64)
    cur = np.empty(m + 1, dtype=np.int64)
    for j in range(m + 1):
        direction[0, j] = INSERT
    for i in range(1, n + 1):
        cur[0] = i
        direction[i, 0] = DELETE
        ai = a[i - 1]
        for j in range(1, m + 1):
            best = prev[j - 1] + (0 if ai == b[j - 1] else 1)
            d = DIAG
            v = prev[j] + 1
            if v < best:
                best = v
                d = DELETE
            v = cur[j - 1] + 1
            if v < best:
                best = v
                d = INSERT
            cur[j] = best
            direction[i, j] = d
        prev, cur = cur, prev

    sub = ins = dele = match = 0
    i, j = n, m
    while i > 0 or j > 0:
        d = direction[i, j]
        if d == DIAG:
            if a[i - 1] == b[j - 1]:
                match += 1
            else:
                sub += 1
            i -= 1
            j -= 1
        elif d == DELETE:
            dele += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return sub, ins, dele, match


@njit(cache=True)
def _admissible(rs, re, hs, he, i, j, collar):
    # i, j are 1-based DP indices.
    return hs[j - 1] <= re[i - 1] + collar and he[j - 1] >= rs[i - 1] - collar


@njit(cache=True)
def time_constrained_counts_full(a, b, rs, re, hs, he, collar):
    n, m = len(a), len(b)
    D = np.empty((n + 1, m + 1), dtype=np.int64)
    for j in range(m + 1):
        D[0, j] = j
    for i in range(1, n + 1):
        D[i, 0] = i
        for j in range(1, m + 1):
            best = D[i - 1, j] + 1
            v = D[i, j - 1] + 1
            if v < best:
                best = v
            if _admissible(rs, re, hs, he, i, j, collar):
                v = D[i - 1, j - 1] + (0 if a[i - 1] == b[j - 1] else 1)
                if v < best:
                    best = v
            D[i, j] = best

    sub = ins = dele = match = 0
    i, j = n, m
    while i > 0 or j > 0:
        cur = D[i, j]
        if i > 0 and j > 0 and _admissible(rs, re, hs, he, i, j, collar):
            c = 0 if a[i - 1] == b[j - 1] else 1
            if D[i - 1, j - 1] + c == cur:
                if c == 0:
                    match += 1
                else:
                    sub += 1
                i -= 1
                j -= 1
                continue
        if i > 0 and D[i - 1, j] + 1 == cur:
            dele += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return sub, ins, dele, match


@njit(cache=True)
def _band_get(values, offsets, bs, be, tcol, i, j):
    """D[i, j] for any cell, using closed forms outside the stored band."""
    if i == 0:
        return j
    if j > be[i]:
        return values[offsets[i] + be[i] - bs[i]] + j - be[i]
    if j < bs[i]:
        t = tcol[j]
        return values[offsets[t] + j - bs[t]] + i - t
    return values[offsets[i] + j - bs[i]]


@njit(cache=True)
def time_constrained_counts_banded(a, b, rs, re, hs, he, collar, bs, be, tcol):
    """Banded variant of :func:`time_constrained_counts_full`.

    ``bs``/``be`` are per-row inclusive band limits (rows 0..n), both
    non-decreasing, with ``bs[i] <= be[i-1]`` and every admissible cell of
    row i inside [bs[i], be[i]]. ``tcol[j]`` is the last row whose band
    contains column j. Under these conditions the values outside the band
    follow closed forms and the result equals the full DP exactly.
    """
    n, m = len(a), len(b)
    offsets = np.empty(n + 2, dtype=np.int64)
    offsets[0] = 0
    for i in range(n + 1):
        offsets[i + 1] = offsets[i] + be[i] - bs[i] + 1
    values = np.empty(offsets[n + 1], dtype=np.int64)

    for j in range(bs[0], be[0] + 1):
        values[j - bs[0]] = j
    for i in range(1, n + 1):
        base = offsets[i]
        lo = bs[i]
        for j in range(lo, be[i] + 1):
            if j == 0:
                values[base] = i
                continue
            best = _band_get(values, offsets, bs, be, tcol, i - 1, j) + 1
            if j - 1 >= lo:
                v = values[base + j - 1 - lo] + 1
            else:
                t = tcol[j - 1]
                v = values[offsets[t] + j - 1 - bs[t]] + i - t + 1
            if v < best:
                best = v
            if _admissible(rs, re, hs, he, i, j, collar):
                v = (_band_get(values, offsets, bs, be, tcol, i - 1, j - 1)
                     + (0 if a[i - 1] == b[j - 1] else 1))
                if v < best:
                    best = v
            values[base + j - lo] = best

    sub = ins = dele = match = 0
    i, j = n, m
    while i > 0 or j > 0:
        cur = _band_get(values, offsets, bs, be, tcol, i, j)
        if i > 0 and j > 0 and _admissible(rs, re, hs, he, i, j, collar):
            c = 0 if a[i - 1] == b[j - 1] else 1
            if _band_get(values, offsets, bs, be, tcol, i - 1, j - 1) + c == cur:
                if c == 0:
                    match += 1
                else:
                    sub += 1
                i -= 1
                j -= 1
                continue
        if i > 0 and _band_get(values, offsets, bs, be, tcol, i - 1, j) + 1 == cur:
            dele += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return sub, ins, dele, match
