"""Host-side sDTW: the reference recurrence, a four-vector streaming variant,
and the query-filtering / self-join drivers built on top of them."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .series import QuerySet, TimeSeries, is_integer_dtype, self_join_windows

METRICS = ("abs_diff", "square_diff")


class AccumulatorOverflowError(OverflowError):
    """A distance or cumulative score left the accumulator range."""


def _check_metric(metric: str) -> None:
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def accumulator_limit(width: int) -> int:
    """Largest value held by a signed accumulator twice as wide as the samples."""
    return (1 << (2 * width - 1)) - 1


def dist(a, b, metric: str = "abs_diff", width: int | None = None):
    """Point distance. Integers are widened to Python ints so nothing wraps;
    ``width`` enables the accumulator range check."""
    _check_metric(metric)
    if isinstance(a, (float, np.floating)) or isinstance(b, (float, np.floating)):
        d = float(a) - float(b)
        return abs(d) if metric == "abs_diff" else d * d
    d = int(a) - int(b)
    out = abs(d) if metric == "abs_diff" else d * d
    if width is not None and out > accumulator_limit(width):
        raise AccumulatorOverflowError(f"dist({a}, {b}) = {out} exceeds {2 * width}-bit accumulator")
    return out


def _unpack(x, width: int | None) -> tuple[list, int | None, bool]:
    if isinstance(x, TimeSeries):
        integer = is_integer_dtype(x.dtype)
        return x.samples.tolist(), (width if width is not None else (x.width if integer else None)), integer
    values = np.asarray(x).tolist()
    if isinstance(values, (int, float)):
        values = [values]
    integer = all(isinstance(v, int) for v in values)
    if integer and width is None:
        width = 32
    return values, (width if integer else None), integer


def _inputs(Q, R, width):
    q, wq, iq = _unpack(Q, width)
    r, wr, ir = _unpack(R, width)
    if not q or not r:
        raise ValueError("query and reference need at least one sample")
    integer = iq and ir
    w = None
    if integer:
        w = max(wq or 0, wr or 0)
    return q, r, w, integer


def sdtw_matrix(Q, R, metric: str = "abs_diff", *, open_start: bool = False,
                width: int | None = None) -> list[list]:
    """Full N x M scoring matrix.

    0-based transcription of the pseudocode: S starts as zeros, S[0][0] holds the
    corner distance, column 0 accumulates down the rows, then rows 1..N-1 are filled
    left to right. Row 0 stays zero for j >= 1 unless ``open_start`` is set, in which
    case S[0][j] = dist(Q[0], R[j]).
    """
    _check_metric(metric)
    q, r, w, integer = _inputs(Q, R, width)
    n, m = len(q), len(r)
    limit = accumulator_limit(w) if integer else None

    def d(a, b):
        return dist(a, b, metric, w if integer else None)

    S = [[0] * m for _ in range(n)]
    S[0][0] = d(q[0], r[0])
    for i in range(1, n):
        S[i][0] = S[i - 1][0] + d(q[i], r[0])
        if limit is not None and S[i][0] > limit:
            raise AccumulatorOverflowError(f"S[{i}][0] exceeds {2 * w}-bit accumulator")
    if open_start:
        for j in range(1, m):
            S[0][j] = d(q[0], r[j])
    for i in range(1, n):
        row, prev = S[i], S[i - 1]
        qi = q[i]
        for j in range(1, m):
            v = d(qi, r[j]) + min(prev[j - 1], row[j - 1], prev[j])
            if limit is not None and v > limit:
                raise AccumulatorOverflowError(f"S[{i}][{j}] exceeds {2 * w}-bit accumulator")
            row[j] = v
    return S


def sdtw_full(Q, R, metric: str = "abs_diff", *, open_start: bool = False, width: int | None = None):
    """Ground-truth sDTW distance: minimum of the last row of the full matrix."""
    return min(sdtw_matrix(Q, R, metric, open_start=open_start, width=width)[-1])


@dataclass
class StreamWorkspace:
    """The only per-call storage of :func:`sdtw_stream`: four vectors, one slot per reference column."""

    s_cur: np.ndarray
    s_diag: np.ndarray
    s_up: np.ndarray
    s_left: np.ndarray

    @classmethod
    def allocate(cls, m: int, dtype=np.int64) -> "StreamWorkspace":
        return cls(*(np.zeros(m, dtype=dtype) for _ in range(4)))

    def vectors(self) -> tuple[np.ndarray, ...]:
        return self.s_cur, self.s_diag, self.s_up, self.s_left


def sdtw_stream(Q, R, metric: str = "abs_diff", *, open_start: bool = False, width: int | None = None,
                workspace: StreamWorkspace | None = None):
    """sDTW distance in O(M) memory, visiting the matrix by anti-diagonals.

    Column j of the workspace plays the role of one crossbar column: at step t it
    owns cell (t - j, j), reads its left/diagonal neighbours from values shifted in
    from column j - 1 and its upper neighbour from its own previous step.
    """
    _check_metric(metric)
    q, r, w, integer = _inputs(Q, R, width)
    n, m = len(q), len(r)
    limit = None
    if integer:
        span = max(max(q), max(r)) - min(min(q), min(r))
        maxd = span if metric == "abs_diff" else span * span
        limit = accumulator_limit(w)
        if maxd > limit:
            dist(max(max(q), max(r)), min(min(q), min(r)), metric, w)  # raises
        safe = n * maxd <= limit and limit <= np.iinfo(np.int64).max
        dtype = np.int64 if safe else object
        if safe:
            limit = None  # no cell can exceed n * maxd
    else:
        dtype = np.float64

    qv = np.array(q, dtype=dtype)[::-1]  # qv[n - 1 - i] == q[i]
    rv = np.array(r, dtype=dtype)
    ws = workspace if workspace is not None else StreamWorkspace.allocate(m, dtype)
    if any(v.shape != (m,) for v in ws.vectors()):
        raise ValueError("workspace vectors must have one slot per reference sample")
    s_cur, s_diag, s_up, s_left = ws.vectors()
    for v in ws.vectors():
        v[...] = 0

    best = None
    for t in range(n + m - 1):
        lo, hi = max(0, t - n + 1), min(m - 1, t)  # active columns, inclusive
        cur = s_cur[lo:hi + 1]
        # step 1: point distances for cells (t - j, j)
        np.subtract(qv[n - 1 - t + lo:n - t + hi], rv[lo:hi + 1], out=cur)
        if metric == "abs_diff":
            np.abs(cur, out=cur)
        else:
            np.multiply(cur, cur, out=cur)
        # steps 2-3: interior cells take the three-way minimum
        a = max(lo, 1)
        b = hi if t - hi > 0 else hi - 1  # skip the row-0 cell at j == t
        if b >= a:
            sl = slice(a, b + 1)
            np.minimum(s_diag[sl], s_up[sl], out=s_diag[sl])
            np.minimum(s_diag[sl], s_left[sl], out=s_diag[sl])
            s_cur[sl] += s_diag[sl]
        if lo == 0 and t >= 1:
            s_cur[0] += s_up[0]  # first column accumulates downwards
        if 1 <= t < m and not open_start:
            s_cur[t] = 0  # row 0 beyond the corner stays zero
        if limit is not None and max(cur) > limit:
            raise AccumulatorOverflowError(f"cumulative score exceeds {2 * w}-bit accumulator")
        j_last = t - (n - 1)
        if 0 <= j_last < m:
            v = s_cur[j_last]
            best = v if best is None or v < best else best
        # steps 4-6: shift right into the neighbour registers, then latch the row
        s_left[1:] = s_cur[:-1]
        s_diag[1:] = s_up[:-1]
        s_up[lo:hi + 1] = cur
    return best.item() if isinstance(best, np.generic) else best


@dataclass(frozen=True)
class SdtwResult:
    query: int
    distance: int | float | None
    anomaly: bool


def _flag(distance, threshold) -> bool:
    return threshold is not None and distance is not None and distance > threshold


def _one_query(args):
    ref, query, metric, open_start = args
    return sdtw_stream(query, ref, metric, open_start=open_start)


def run_query_filtering(ref: TimeSeries, qs: QuerySet | Sequence[TimeSeries], metric: str = "abs_diff",
                        threshold=None, *, open_start: bool = False, workers: int = 1) -> list[SdtwResult]:
    """Distance of every query against the reference, flagged when above ``threshold``."""
    queries = list(qs)
    if isinstance(qs, QuerySet) and qs.mode != "query_filtering":
        raise ValueError("query set is not in query_filtering mode")
    jobs = [(ref, q, metric, open_start) for q in queries]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            dists = list(pool.map(_one_query, jobs))
    else:
        dists = [_one_query(j) for j in jobs]
    return [SdtwResult(k, d, _flag(d, threshold)) for k, d in enumerate(dists)]


def run_self_join(series: TimeSeries, m: int, metric: str = "abs_diff", threshold=None, *,
                  open_start: bool = False) -> list[SdtwResult]:
    """For every window of length m, the smallest sDTW distance to any window at
    least m samples away (the trivial-match exclusion zone). Windows with no
    admissible partner report ``None``."""
    if m > len(series):
        raise ValueError(f"window {m} longer than series of length {len(series)}")
    windows = self_join_windows(series, m).queries
    count = len(windows)
    best: list = [None] * count
    for i in range(count):
        for j in range(i + m, count):
            d_ij = sdtw_stream(windows[i], windows[j], metric, open_start=open_start)
            d_ji = sdtw_stream(windows[j], windows[i], metric, open_start=open_start)
            if best[i] is None or d_ij < best[i]:
                best[i] = d_ij
            if best[j] is None or d_ji < best[j]:
                best[j] = d_ji
    return [SdtwResult(k, d, _flag(d, threshold)) for k, d in enumerate(best)]
