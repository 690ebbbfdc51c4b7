"""
Alignment kernels shared by all metrics.

* :func:`levenshtein_align` -- unit-cost word alignment.
* :func:`time_constrained_align` -- alignment in which a ref word and a hyp
  word may only be paired (matched or substituted) when their intervals
  overlap after widening by a collar.
* :func:`solve_assignment` -- exact minimum-cost partial assignment with
  unmatched penalties and a lexicographic tie-break.
"""
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from longscribe import _kernels
from longscribe.errors import InvariantError, UnsortedInput

__all__ = [
    'EditSummary',
    'Assignment',
    'levenshtein_align',
    'levenshtein_distance',
    'time_constrained_align',
    'solve_assignment',
    'word_ids',
    'to_ticks',
    'TICKS_PER_SECOND',
]


@dataclass(frozen=True)
class EditSummary:
    substitutions: int = 0
    insertions: int = 0
    deletions: int = 0
    matches: int = 0
    ref_len: int = 0

    def __post_init__(self):
        counts = (self.substitutions, self.insertions, self.deletions, self.matches, self.ref_len)
        if any(c < 0 for c in counts):
            raise InvariantError(f'negative count in {self}')
        if self.matches + self.substitutions + self.deletions != self.ref_len:
            raise InvariantError(f'matches + substitutions + deletions != ref_len in {self}')

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def hyp_len(self) -> int:
        return self.matches + self.substitutions + self.insertions

    def __add__(self, other):
        if not isinstance(other, EditSummary):
            return NotImplemented
        return EditSummary(
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.matches + other.matches,
            self.ref_len + other.ref_len,
        )

    def __radd__(self, other):
        # Support sum().
        if other == 0:
            return self
        return NotImplemented

    @classmethod
    def all_deleted(cls, n):
        return cls(deletions=n, ref_len=n)

    @classmethod
    def all_inserted(cls, n):
        return cls(insertions=n)


def word_ids(*streams):
    """Map word sequences to int64 arrays over one shared vocabulary."""
    vocab = {}
    out = []
    for stream in streams:
        out.append(np.fromiter((vocab.setdefault(w, len(vocab)) for w in stream),
                               dtype=np.int64, count=len(stream)))
    return out


def _summary(counts, ref_len):
    sub, ins, dele, match = (int(c) for c in counts)
    return EditSummary(sub, ins, dele, match, ref_len)


def levenshtein_align(ref: Sequence[str], hyp: Sequence[str]) -> EditSummary:
    """Minimum-cost unit alignment of two word lists.

    >>> levenshtein_align(['a', 'b', 'c'], ['a', 'x'])
    EditSummary(substitutions=1, insertions=0, deletions=1, matches=1, ref_len=3)
    """
    a, b = word_ids(ref, hyp)
    return _summary(_kernels.levenshtein_counts(a, b), len(ref))


def levenshtein_distance(ref: Sequence[str], hyp: Sequence[str]) -> int:
    """Edit cost only; cheaper than :func:`levenshtein_align` (two DP rows)."""
    if not ref or not hyp:
        return len(ref) + len(hyp)
    a, b = word_ids(ref, hyp)
    return int(_kernels.levenshtein_cost(a, b))


TICKS_PER_SECOND = 10 ** 9
_MAX_TICKS = 2 ** 61


def to_ticks(seconds) -> int:
    """Seconds as integer nanoseconds.

    Timing comparisons run on this grid so decimal inputs compare as
    written: ``0.07 + 5.0`` and ``5.07`` are the same tick, though not the
    same float.
    """
    if math.isinf(seconds):
        return _MAX_TICKS if seconds > 0 else -_MAX_TICKS
    return max(-_MAX_TICKS, min(_MAX_TICKS, round(seconds * TICKS_PER_SECOND)))


def _as_arrays(words):
    texts = [w[0] for w in words]
    starts = np.array([to_ticks(w[1]) for w in words], dtype=np.int64)
    ends = np.array([to_ticks(w[2]) for w in words], dtype=np.int64)
    return texts, starts, ends


def _check_sorted(starts, side):
    if len(starts) > 1 and np.any(starts[1:] < starts[:-1]):
        raise UnsortedInput(f'{side} words are not sorted by start time')


def _band(rs, re, hs, he, collar):
    """Per-row band limits for the time-constrained DP (see the kernel)."""
    n, m = len(rs), len(hs)
    hi = np.searchsorted(hs, re + collar, side='right')
    running_end = np.maximum.accumulate(he) if m else he
    lo = np.searchsorted(running_end, rs - collar, side='left') + 1
    empty = lo > hi
    lo = np.where(empty, m + 1, lo)
    hi = np.where(empty, 0, hi)

    be = np.empty(n + 1, dtype=np.int64)
    be[0] = 0
    if n:
        be[1:] = np.maximum.accumulate(hi)
    suffix_lo = np.minimum.accumulate(lo[::-1])[::-1] if n else lo
    bs = np.zeros(n + 1, dtype=np.int64)
    if n:
        bs[1:] = np.minimum(suffix_lo, be[:-1])
    tcol = np.searchsorted(bs, np.arange(m + 1), side='right') - 1
    return bs, be, tcol.astype(np.int64)


def time_constrained_align(ref, hyp, collar: float, banded: bool = True) -> EditSummary:
    """Alignment where pairing ref word r with hyp word h is allowed iff
    ``h.start <= r.end + collar`` and ``h.end >= r.start - collar``.

    ``ref`` and ``hyp`` are sequences of ``(text, start, end)`` triples (or
    :class:`~longscribe.transcript.Word` objects with timings), each sorted
    by start time. Disallowed pairings cost as if unavailable, so the words
    become one deletion plus one insertion. ``banded=False`` runs the full
    quadratic DP; both paths give identical summaries.
    """
    if collar < 0 or math.isnan(collar):
        raise ValueError(f'collar must be >= 0, got {collar}')
    ref = [_triple(w) for w in ref]
    hyp = [_triple(w) for w in hyp]
    rtexts, rs, re = _as_arrays(ref)
    htexts, hs, he = _as_arrays(hyp)
    _check_sorted(rs, 'reference')
    _check_sorted(hs, 'hypothesis')
    if not ref or not hyp:
        return EditSummary(insertions=len(hyp), deletions=len(ref), ref_len=len(ref))
    a, b = word_ids(rtexts, htexts)
    collar = to_ticks(collar)
    if banded:
        bs, be, tcol = _band(rs, re, hs, he, collar)
        counts = _kernels.time_constrained_counts_banded(a, b, rs, re, hs, he, collar, bs, be, tcol)
    else:
        counts = _kernels.time_constrained_counts_full(a, b, rs, re, hs, he, collar)
    return _summary(counts, len(ref))


def _triple(w):
    if hasattr(w, 'text'):
        if w.start is None:
            raise ValueError(f'word {w.text!r} has no timing')
        return (w.text, w.start, w.end)
    text, start, end = w
    return (text, start, end)


# --------------------------------------------------------------------------
# Assignment

@dataclass(frozen=True)
class Assignment:
    mapping: dict
    total_cost: object

    def __post_init__(self):
        cols = list(self.mapping.values())
        if len(set(cols)) != len(cols):
            raise InvariantError('assignment mapping is not injective')


def _exact(x):
    if isinstance(x, (int, Fraction)) and not isinstance(x, bool):
        return x
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f'costs must be finite, got {x}')
        return Fraction(x)
    return Fraction(x)


def _hungarian(a):
    """Minimum-cost perfect matching of a square matrix (shortest augmenting paths).

    Works on any exact ordered numbers (int, Fraction). Returns row -> col.
    """
    n = len(a)
    if n == 0:
        return []
    u = [0] * (n + 1)
    v = [0] * (n + 1)
    p = [0] * (n + 1)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [None] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = a[i0 - 1]
            delta = None
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - u[i0] - v[j]
                    if minv[j] is None or cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if delta is None or minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    result = [0] * n
    for j in range(1, n + 1):
        result[p[j] - 1] = j - 1
    return result


def _optimum(cost, row_pen, col_pen, rows, cols):
    """Minimum of matched + unmatched penalty cost restricted to ``rows`` x ``cols``."""
    if not rows:
        return sum((col_pen[j] for j in cols), 0)
    if not cols:
        return sum((row_pen[i] for i in rows), 0)
    r, c = len(rows), len(cols)
    big = 1 + sum(cost[i][j] for i in rows for j in cols)
    big += sum(row_pen[i] for i in rows) + sum(col_pen[j] for j in cols)
    size = r + c
    a = [[big] * size for _ in range(size)]
    for x, i in enumerate(rows):
        for y, j in enumerate(cols):
            a[x][y] = cost[i][j]
        a[x][c + x] = row_pen[i]
    for y, j in enumerate(cols):
        a[r + y][y] = col_pen[j]
        for x in range(r):
            a[r + y][c + x] = 0
    match = _hungarian(a)
    return sum((a[x][match[x]] for x in range(size)), 0)


def solve_assignment(cost, unmatched_row_cost=None, unmatched_col_cost=None) -> Assignment:
    """Injective row -> col mapping minimizing matched cost plus penalties
    for every unmatched row and column.

    Rectangular inputs are handled by padding to a square with penalty
    rows/columns. Among optimal mappings the lexicographically smallest is
    returned, reading the mapping as the column chosen per row in row order
    and ranking "unmatched" after every column. Omitting a penalty vector
    makes that side match as fully as the shape allows (classic rectangular
    assignment); the reported ``total_cost`` then bills only the given
    penalties. Costs may be ints, floats
    or Fractions; floats are converted exactly to Fractions, so the reported
    ``total_cost`` is exact.

    >>> solve_assignment([[5, 3]], [0], [2, 2])
    Assignment(mapping={0: 1}, total_cost=5)
    """
    cost = [[_exact(x) for x in row] for row in cost]
    n_rows = len(cost)
    n_cols = len(cost[0]) if n_rows else len(unmatched_col_cost or ())
    if any(len(row) != n_cols for row in cost):
        raise ValueError('cost matrix must be rectangular')
    row_pen = None if unmatched_row_cost is None else [_exact(x) for x in unmatched_row_cost]
    col_pen = None if unmatched_col_cost is None else [_exact(x) for x in unmatched_col_cost]
    if (row_pen is not None and len(row_pen) != n_rows) or (col_pen is not None and len(col_pen) != n_cols):
        raise ValueError('penalty vectors must match the matrix shape')
    if any(x < 0 for row in cost for x in row) or any(x < 0 for x in (row_pen or []) + (col_pen or [])):
        raise ValueError('costs and penalties must be >= 0')

    # An omitted penalty vector means "match as many of these as the shape
    # allows": a penalty larger than any achievable saving, not billed.
    big = 1 + sum(x for row in cost for x in row) + sum(row_pen or []) + sum(col_pen or [])
    billed_rows = row_pen if row_pen is not None else [0] * n_rows
    billed_cols = col_pen if col_pen is not None else [0] * n_cols
    row_pen = row_pen if row_pen is not None else [big] * n_rows
    col_pen = col_pen if col_pen is not None else [big] * n_cols

    # Rational inputs are scaled to integers; the search itself is int-only.
    scale = 1
    for x in [x for row in cost for x in row] + row_pen + col_pen:
        if isinstance(x, Fraction):
            scale = math.lcm(scale, x.denominator)
    if scale != 1:
        cost = [[int(x * scale) for x in row] for row in cost]
        row_pen = [int(x * scale) for x in row_pen]
        col_pen = [int(x * scale) for x in col_pen]
        billed_rows = [int(x * scale) for x in billed_rows]
        billed_cols = [int(x * scale) for x in billed_cols]

    rows = list(range(n_rows))
    remaining = list(range(n_cols))
    best = _optimum(cost, row_pen, col_pen, rows, remaining)

    mapping = {}
    spent = 0
    for r in rows:
        rest = rows[r + 1:]
        for option in remaining + [None]:
            here = row_pen[r] if option is None else cost[r][option]
            left = [j for j in remaining if j != option]
            if spent + here + _optimum(cost, row_pen, col_pen, rest, left) == best:
                if option is not None:
                    mapping[r] = option
                    remaining = left
                spent += here
                break
        else:  # pragma: no cover - an optimal completion always exists
            raise AssertionError('no optimal completion found')
    matched_cols = set(mapping.values())
    total = (sum((cost[r][c] for r, c in mapping.items()), 0)
             + sum((billed_rows[r] for r in rows if r not in mapping), 0)
             + sum((billed_cols[c] for c in range(n_cols) if c not in matched_cols), 0))
    if scale != 1:
        total = Fraction(total, scale)
    return Assignment(mapping, total)
