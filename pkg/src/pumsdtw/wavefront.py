"""Diagonal-wavefront sDTW on the simulated crossbar.

Column ``j`` of a replica owns reference sample ``R[j]``. Query elements enter
at the replica's first column and move one column right per iteration, so at
iteration ``t`` column ``j`` works on stream element ``g = t - j``. Elements of
consecutive queries follow each other without gaps, which keeps every column
busy once the pipeline has filled.

Per iteration (all occupied columns in parallel):

1. distance ``Q - R`` then ``|.|`` (or ``(.)^2``) into AUX0
2. ``min(S_diag, S_up, S_left)`` into AUX1, with S_cur as compare scratch
3. ``S_cur = AUX0 + AUX1``; columns finishing a query's last row are read out
4. diagonal copy S_cur -> S_left
5. diagonal copy S_up -> S_diag
6. vertical copy S_cur -> S_up
7. diagonal copy Q -> Q, the next query element entering at the first column

First-row and first-column handling follows the host recurrence cell by cell.
The first column of the reference gets a saturated value injected as its left
and diagonal neighbours, so its minimum is always the cell above and the
column accumulates downwards. Columns holding a query's first row get their
minimum forced to zero; without ``open_start`` their distance is zeroed as
well (except at reference column 0), reproducing the zero first row.
"""
from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import SdtwResult, _check_metric
from .crossbar import ColumnLayout, CrossbarArray, column_mask
from .ledger import GATED_KINDS, CostLedger
from .mapper import BatchBoundary, MappingPlan, carry_boundary, load_reference, plan as make_plan
from .series import TimeSeries, is_integer_dtype

TraceSink = Callable[[dict], None]


class CrossbarOverflowError(OverflowError):
    """A crossbar column wrapped around; its result differs from the host oracle."""

    def __init__(self, columns: Sequence[int]):
        self.columns = list(columns)
        super().__init__(f"arithmetic overflow flagged in {len(self.columns)} column(s), first {self.columns[:8]}")


def layout_for(dtype: str) -> ColumnLayout:
    if not is_integer_dtype(dtype):
        raise ValueError(f"{dtype} samples are only supported on the host path")
    width = np.dtype(dtype).itemsize * 8
    return ColumnLayout(width)  # raises for int64


@dataclass
class _Stream:
    """Query elements assigned to one replica, in injection order."""

    queries: list[int]
    values: list[int]
    rows: list[int]
    starts: list[int]  # element index of each query's first row
    ends: list[int]    # element index of each query's last row
    owner: list[int]   # query id per element

    @classmethod
    def build(cls, query_ids: Sequence[int], queries: Sequence[TimeSeries]) -> "_Stream":
        values, rows, starts, ends, owner = [], [], [], [], []
        for q in query_ids:
            samples = queries[q].samples.tolist()
            starts.append(len(values))
            values.extend(int(v) for v in samples)
            rows.extend(range(len(samples)))
            owner.extend([q] * len(samples))
            ends.append(len(values) - 1)
        return cls(list(query_ids), values, rows, starts, ends, owner)

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class WavefrontState:
    """Progress of one batch through the pipeline."""

    batch: int
    columns: int                      # columns per replica in this batch
    bases: list[int]                  # first physical column of each replica
    streams: list[_Stream]
    step: int = 0
    running_min: dict[int, int] = field(default_factory=dict)
    finished_columns: dict[int, int] = field(default_factory=dict)
    boundary_in: BatchBoundary | None = None
    boundary_out: BatchBoundary | None = None

    @property
    def total_steps(self) -> int:
        spans = [len(s) + self.columns - 1 for s in self.streams if len(s)]
        return max(spans) if spans else 0

    @property
    def done(self) -> bool:
        return self.step >= self.total_steps

    def occupancy(self, t: int | None = None) -> list[tuple[int, int, int]]:
        """(physical column, query id, query row) for every busy column at step ``t``."""
        t = self.step if t is None else t
        out = []
        for base, s in zip(self.bases, self.streams):
            for j in range(max(0, t - len(s) + 1), min(self.columns - 1, t) + 1):
                g = t - j
                out.append((base + j, s.owner[g], s.rows[g]))
        return out


class WavefrontEngine:
    """Runs the seven-step iteration on a :class:`CrossbarArray`."""

    def __init__(self, array: CrossbarArray, layout: ColumnLayout, metric: str = "abs_diff",
                 open_start: bool = False, trace: TraceSink | None = None):
        _check_metric(metric)
        self.array = array
        self.layout = layout
        self.metric = metric
        self.open_start = open_start
        self.trace = trace
        self.inf = (1 << (layout.width - 1)) - 1

    # ------------------------------------------------------------ masks
    def _masks(self, state: WavefrontState, t: int) -> dict[str, int]:
        occ = rz = last = first = 0
        C = state.columns
        for base, s in zip(state.bases, state.streams):
            G = len(s)
            lo, hi = max(0, t - G + 1), min(C - 1, t)
            if G == 0 or lo > hi:
                continue
            occ |= ((1 << (hi - lo + 1)) - 1) << (base + lo)
            # elements in flight are g in [t - hi, t - lo]
            for lst, name in ((s.starts, "rz"), (s.ends, "last")):
                k = bisect.bisect_left(lst, t - hi)
                end = bisect.bisect_right(lst, t - lo)
                bits = 0
                for g in lst[k:end]:
                    bits |= 1 << (base + t - g)
                if name == "rz":
                    rz |= bits
                else:
                    last |= bits
            if state.batch == 0:
                first |= 1 << base
        return {"occ": occ, "rz": rz, "last": last, "first": first}

    def _injections(self, state: WavefrontState, t_next: int):
        """Values entering each replica's first column for step ``t_next``."""
        mask, q_vals, left_vals, diag_vals = 0, [], [], []
        for base, s in zip(state.bases, state.streams):
            if 0 <= t_next < len(s):
                mask |= 1 << base
                q_vals.append(s.values[t_next])
                if state.boundary_in is None:
                    left_vals.append(self.inf)
                    diag_vals.append(self.inf)
                else:
                    left_vals.append(state.boundary_in.left(t_next))
                    diag_vals.append(state.boundary_in.s_up(t_next))
        return mask, q_vals, left_vals, diag_vals

    # ------------------------------------------------------------ public steps
    def prologue(self, state: WavefrontState) -> None:
        """Load the first query element (and neighbour seeds) into each first column."""
        X, L = self.array, self.layout
        inj, q_vals, left_vals, diag_vals = self._injections(state, 0)
        if not inj:
            return
        inj_all = _bases_mask(state.bases)
        X.diagonal_copy_slice(L.S_CUR, L.S_LEFT, inj, inject_value=_align(left_vals, inj, inj_all), inject_mask=inj_all)
        X.diagonal_copy_slice(L.S_UP, L.S_DIAG, inj, inject_value=_align(diag_vals, inj, inj_all), inject_mask=inj_all)
        X.diagonal_copy_slice(L.Q, L.Q, inj, inject_value=_align(q_vals, inj, inj_all), inject_mask=inj_all)

    def iterate(self, state: WavefrontState) -> WavefrontState:
        """Apply one full seven-step iteration to every occupied column."""
        if state.done:
            return state
        X, L, t = self.array, self.layout, state.step
        before = X.ledger.copy() if self.trace else None
        m = self._masks(state, t)
        occ, rz, first = m["occ"], m["rz"], m["first"]
        rz_inner = rz & ~first
        dist_mask = occ if self.open_start else occ & ~rz_inner

        # 1. distance
        if self.metric == "abs_diff":
            X.bitserial_sub(L.Q, L.R, L.AUX0, dist_mask)
            X.bitserial_abs(L.AUX0, L.AUX0, dist_mask)
        else:
            X.bitserial_sub(L.Q, L.R, L.S_CUR, dist_mask)
            X.bitserial_abs(L.S_CUR, L.S_CUR, dist_mask)
            X.bitserial_square(L.S_CUR, L.AUX0, dist_mask)
        if not self.open_start:
            X.zero_slice(L.AUX0, rz_inner)
        # 2. minimum of the three neighbours
        X.bitserial_min3(L.S_DIAG, L.S_UP, L.S_LEFT, L.AUX1, L.S_CUR, occ & ~rz)
        X.zero_slice(L.AUX1, rz)
        # 3. accumulate, then fold finished last-row cells into the running minima
        X.bitserial_add(L.AUX0, L.AUX1, L.S_CUR, occ)
        self.extract_minimum(state, m["last"])
        if state.boundary_out is not None:
            self._save_boundary(state)
        # 4-7. shift neighbours and the query stream one column right
        next_occ = self._masks(state, t + 1)["occ"] if t + 1 < state.total_steps else 0
        inj, q_vals, left_vals, diag_vals = self._injections(state, t + 1)
        inj_all = _bases_mask(state.bases)
        X.diagonal_copy_slice(L.S_CUR, L.S_LEFT, next_occ, inject_value=_align(left_vals, inj, inj_all),
                              inject_mask=inj_all)
        X.diagonal_copy_slice(L.S_UP, L.S_DIAG, next_occ, inject_value=_align(diag_vals, inj, inj_all),
                              inject_mask=inj_all)
        X.copy_slice(L.S_CUR, L.S_UP, occ)
        X.diagonal_copy_slice(L.Q, L.Q, next_occ, inject_value=_align(q_vals, inj, inj_all), inject_mask=inj_all)

        state.step += 1
        X.ledger.iterations += 1
        if self.trace:
            self.trace({
                "batch": state.batch,
                "iteration": t,
                "occupied": [list(o) for o in state.occupancy(t)],
                "delta": X.ledger.delta(before),
            })
        return state

    def extract_minimum(self, state: WavefrontState, last_mask: int) -> dict[int, int]:
        """Read S_cur of columns that just computed a query's last row and fold it
        into that query's running minimum."""
        if not last_mask:
            return {}
        values = self.array.read_words(self.layout.S_CUR, last_mask)
        t = state.step
        folded = {}
        mask = last_mask
        while mask:
            low = mask & -mask
            col = low.bit_length() - 1
            mask ^= low
            r = _replica_of(state.bases, col)
            g = t - (col - state.bases[r])
            q = state.streams[r].owner[g]
            v = int(values[col])
            prev = state.running_min.get(q)
            state.running_min[q] = v if prev is None or v < prev else prev
            state.finished_columns[q] = state.finished_columns.get(q, 0) + 1
            folded[q] = state.running_min[q]
        return folded

    def _save_boundary(self, state: WavefrontState) -> None:
        base, s = state.bases[0], state.streams[0]
        j = state.columns - 1
        g = state.step - j
        if 0 <= g < len(s):
            col = base + j
            v = self.array.read_words(self.layout.S_CUR, 1 << col)[col]
            state.boundary_out.record(g, s.rows[g], int(v))


def _bases_mask(bases: Sequence[int]) -> int:
    m = 0
    for b in bases:
        m |= 1 << b
    return m


def _align(values: list[int], present: int, inject_mask: int) -> list[int]:
    """Spread values given for the replicas in ``present`` over all injected columns."""
    out, it = [], iter(values)
    mask = inject_mask
    while mask:
        low = mask & -mask
        mask ^= low
        out.append(next(it) if present & low else 0)
    return out


def _replica_of(bases: Sequence[int], col: int) -> int:
    return bisect.bisect_right(bases, col) - 1


@dataclass
class BatchRun:
    results: list[SdtwResult]
    ledger: CostLedger
    plan: MappingPlan
    iterations: int


def run_batch(ref: TimeSeries, queries: Sequence[TimeSeries], mp: MappingPlan | None = None, tech=None,
              metric: str = "abs_diff", *, total_columns: int | None = None, threshold=None,
              open_start: bool = False, trace: TraceSink | None = None,
              check_overflow: bool = True) -> BatchRun:
    """Compute every query's sDTW distance on the simulated crossbar.

    ``tech`` is accepted for symmetry with the cost model and is not needed to
    simulate; time and energy follow from the returned ledger.
    """
    _check_metric(metric)
    queries = list(queries)
    layout = layout_for(ref.dtype)
    for q in queries:
        if q.dtype != ref.dtype:
            raise ValueError("queries and reference must share one dtype")
    if mp is None:
        mp = make_plan(total_columns if total_columns is not None else len(ref), len(ref), len(queries))
    if mp.ref_len != len(ref):
        raise ValueError("plan was made for a different reference length")
    if sum(len(a) for a in mp.assignment) != len(queries):
        raise ValueError("plan was made for a different number of queries")

    ledger = CostLedger()
    array = CrossbarArray(mp.total_columns, ledger)
    engine = WavefrontEngine(array, layout, metric, open_start, trace)
    streams = [_Stream.build(a, queries) for a in mp.assignment]
    if mp.batches == 1:
        bases = [r * mp.ref_len for r in range(mp.replication)]
    else:
        bases = [0]
    minima: dict[int, int] = {}
    boundary: BatchBoundary | None = None
    iterations = 0
    if queries:
        for b in range(mp.batches):
            if b == 0 or mp.batches > 1:
                load_reference(mp, ref, array, layout, b)
            state = WavefrontState(b, len(mp.batch_span(b)), bases, streams, boundary_in=boundary,
                                   boundary_out=BatchBoundary() if b < mp.batches - 1 else None)
            engine.prologue(state)
            while not state.done:
                engine.iterate(state)
            iterations += state.step
            for q, v in state.running_min.items():
                minima[q] = v if q not in minima else min(minima[q], v)
            if b < mp.batches - 1:
                boundary = carry_boundary(mp, b, state.boundary_out, len(streams[0]))
    array.finalize_ledger()
    if check_overflow and array.sa.overflow:
        raise CrossbarOverflowError(array.overflow_columns())
    results = []
    for k in range(len(queries)):
        d = minima[k]
        results.append(SdtwResult(k, d, threshold is not None and d > threshold))
    return BatchRun(results, ledger, mp, iterations)


def jsonl_trace(fh) -> TraceSink:
    """Trace sink writing one JSON object per iteration."""
    def sink(record: dict) -> None:
        fh.write(json.dumps(record, sort_keys=True) + "\n")
    return sink


# ---------------------------------------------------------------- analytic schedule

@dataclass(frozen=True)
class OpCosts:
    """Phase counts and per-column bit coefficients of each iteration step at width w."""

    width: int
    metric: str

    def dist_phases(self) -> tuple[int, int]:
        w = self.width
        r = w2 = 2 * w + 2 * w + 1          # sub + abs
        if self.metric == "square_diff":
            r += w * (w + 2) + 1
            w2 += w * (w + 3) + 1
        return r, w2

    def dist_read_bits(self) -> int:
        w = self.width
        bits = 4 * w + (1 + 2 * w)          # sub, abs (sign + loop)
        if self.metric == "square_diff":
            bits += sum(1 + 4 * (w - k) for k in range(w)) + 1
        return bits

    def dist_fixed_write_bits(self) -> int:
        w = self.width
        return w + (w if self.metric == "square_diff" else 0)  # sub (+ zeroing in square)

    def min3_phases(self) -> int:
        return 7 * self.width + 2

    def min3_read_bits(self) -> int:
        w = self.width
        return w + 2 * (4 * w + 1 + w)

    def min3_fixed_write_bits(self) -> int:
        return 3 * self.width  # copy + two scratch subtractions

    def gated_capacity(self) -> dict[str, int]:
        """Cells a predicate may write, per dist (abs, square) or min column."""
        w = self.width
        cap = {"abs": w, "min3": 2 * w}
        if self.metric == "square_diff":
            cap["square"] = w * (w + 1) // 2
        return cap


def _stream_shape(lengths: Sequence[int]) -> tuple[int, np.ndarray, np.ndarray]:
    ends = np.cumsum(np.asarray(lengths, dtype=np.int64)) - 1 if len(lengths) else np.zeros(0, np.int64)
    starts = ends - np.asarray(lengths, dtype=np.int64) + 1 if len(lengths) else np.zeros(0, np.int64)
    return int(ends[-1] + 1) if len(lengths) else 0, starts, ends


def _window_count(points: np.ndarray, t: np.ndarray, lo_off: np.ndarray, hi_off: np.ndarray) -> np.ndarray:
    """For each t, number of points in [t - hi_off, t - lo_off]."""
    return np.searchsorted(points, t - lo_off, side="right") - np.searchsorted(points, t - hi_off, side="left")


_CHUNK = 1 << 20


def _schedule_counts(G: int, starts: np.ndarray, ends: np.ndarray, C: int, t: np.ndarray, *,
                     first_batch: bool, has_next_batch: bool, open_start: bool) -> dict[str, np.ndarray]:
    """Columns taking part in each step at iterations ``t``, for one replica stream."""
    def occupied(tt):
        lo = np.maximum(0, tt - G + 1)
        hi = np.minimum(C - 1, tt)
        return lo, hi, np.clip(hi - lo + 1, 0, None)

    lo, hi, occ = occupied(t)
    rz = np.where(occ > 0, _window_count(starts, t, lo, hi), 0)
    last = np.where(occ > 0, _window_count(ends, t, lo, hi), 0)
    first_rz = np.isin(t, starts).astype(np.int64) if first_batch else 0
    rzi = rz - first_rz
    if has_next_batch:
        bound = ((t >= C - 1) & (t - (C - 1) < G)).astype(np.int64)
    else:
        bound = np.zeros(t.size, np.int64)
    return {"occ": occ, "dist": occ if open_start else occ - rzi, "rzi": rzi, "rz": rz, "min": occ - rz,
            "last": last, "next": occupied(t + 1)[2], "bound": bound}


def estimate_ledger(mp: MappingPlan, query_lengths: Sequence[int], width: int, metric: str = "abs_diff", *,
                    open_start: bool = False, gated_fractions: dict[str, float] | None = None) -> CostLedger:
    """Ledger of :func:`run_batch` derived from the schedule alone.

    Phase counts, read bits and ungated write bits match the simulator exactly;
    predicated writes are ``capacity x fraction`` per kind (fractions default
    to 0.5 and are best taken from a simulated sample with the same data).
    Per-cell maxima are estimates.
    """
    _check_metric(metric)
    fr = {k: 0.5 for k in GATED_KINDS}
    if gated_fractions:
        fr.update(gated_fractions)
    ops = OpCosts(width, metric)
    w = width
    led = CostLedger()
    groups: dict[tuple[int, ...], int] = {}
    for a in mp.assignment:
        key = tuple(query_lengths[q] for q in a)
        groups[key] = groups.get(key, 0) + 1
    n_active = sum(c for k, c in groups.items() if sum(k) > 0)
    if n_active == 0:
        led.cells = 256 * mp.total_columns
        return led

    cap_total = {k: 0 for k in GATED_KINDS}
    busiest = 0
    for b in range(mp.batches):
        C = len(mp.batch_span(b))
        # reference load
        loaded = mp.used_columns if mp.batches == 1 else C
        if b == 0 or mp.batches > 1:
            led.write(w * loaded, phases=w)
        shapes = [(_stream_shape(k), mult) for k, mult in groups.items() if sum(k) > 0]
        T = max(G + C - 1 for (G, _, _), _ in shapes)
        names = ("occ", "dist", "rzi", "rz", "min", "last", "next", "bound")
        n = dict.fromkeys(names, 0)
        k_any = dict.fromkeys(names, 0)   # iterations where the step runs at all
        for t0 in range(0, T, _CHUNK):
            t = np.arange(t0, min(T, t0 + _CHUNK), dtype=np.int64)
            flags = {k: np.zeros(t.size, bool) for k in names}
            for (G, starts, ends), mult in shapes:
                c = _schedule_counts(G, starts, ends, C, t, first_batch=b == 0,
                                     has_next_batch=b < mp.batches - 1, open_start=open_start)
                for k in names:
                    n[k] += mult * int(c[k].sum())
                    flags[k] |= c[k] > 0
            for k in names:
                k_any[k] += int(flags[k].sum())
        busiest = max([busiest] + [G for (G, _, _), _ in shapes])
        # prologue: three diagonal copies into the first columns
        led.read(3 * w * n_active, phases=3 * w)
        led.write(3 * w * n_active, phases=3 * w)
        dr, dw = ops.dist_phases()
        k_dist = k_any["dist"]
        led.read(ops.dist_read_bits() * n["dist"], phases=dr * k_dist)
        led.write(ops.dist_fixed_write_bits() * n["dist"], phases=dw * k_dist)
        if not open_start:
            led.write(w * n["rzi"], phases=w * k_any["rzi"])
        k_min = k_any["min"]
        led.read(ops.min3_read_bits() * n["min"], phases=ops.min3_phases() * k_min)
        led.write(ops.min3_fixed_write_bits() * n["min"], phases=ops.min3_phases() * k_min)
        led.write(w * n["rz"], phases=w * k_any["rz"])
        k_occ = k_any["occ"]
        led.read(4 * w * n["occ"], phases=2 * w * k_occ)            # add
        led.write(w * n["occ"], phases=2 * w * k_occ)
        led.read(w * n["last"], phases=w * k_any["last"])     # extraction
        led.read(w * n["bound"], phases=w * k_any["bound"])   # boundary save
        k_next = k_any["next"]
        led.read(3 * w * n["next"] + w * n["occ"], phases=3 * w * k_next + w * k_occ)
        led.write(3 * w * n["next"] + w * n["occ"], phases=3 * w * k_next + w * k_occ)
        cap = ops.gated_capacity()
        cap_total["abs"] += cap["abs"] * n["dist"]
        cap_total["min3"] += cap["min3"] * n["min"]
        if "square" in cap:
            cap_total["square"] += cap["square"] * n["dist"]
        led.iterations += T
    for kind, capacity in cap_total.items():
        if capacity:
            written = int(round(capacity * fr[kind]))
            led.gated(kind, capacity, written)
            led.write_bits += written
    led.cells = 256 * mp.total_columns
    led.max_cell_writes = _estimate_max_cell(ops, fr, busiest, mp.batches)
    return led


def _estimate_max_cell(ops: OpCosts, fr: dict[str, float], busiest: int, batches: int) -> float:
    """Writes to the busiest S_cur cell: two compare scratch writes and the sum per
    occupied iteration, plus the distance scratch for square_diff."""
    rate = 3.0
    if ops.metric == "square_diff":
        rate += 1.0 + fr.get("abs", 0.5)
    return rate * busiest * batches + batches
