"""Workload definitions, synthetic data, and one-call evaluation on a device."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import METRICS, run_query_filtering, run_self_join
from .crossbar import SUBARRAY_COLS
from .ledger import CostLedger
from .mapper import plan
from .series import QuerySet, TimeSeries, dtype_bits, dtype_range, ingest, is_integer_dtype, random_walk, slice_queries
from .wavefront import estimate_ledger, run_batch

K = 1024
TABLE3_REF_SIZES = (64 * K, 128 * K, 256 * K, 512 * K)
TABLE3_QUERY_SIZES = (4 * K, 8 * K, 16 * K, 32 * K)
TABLE3_NUM_QUERIES = (4 * K, 8 * K, 16 * K, 64 * K)
DESK_SCALE = 64


@dataclass(frozen=True)
class WorkloadSpec:
    ref_size: int
    query_size: int
    num_queries: int
    generator: str = "random_walk"   # or "file"
    path: str | None = None
    stride: int | None = None
    scale: int = 1                   # 64 marks a desk-scale twin of a full-size point

    def __post_init__(self):
        if min(self.ref_size, self.query_size, self.num_queries) < 1:
            raise ValueError("workload sizes must be positive")
        if self.generator not in ("random_walk", "file"):
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.generator == "file" and not self.path:
            raise ValueError("file generator needs a path")

    @property
    def workload_id(self) -> str:
        tag = f"r{self.ref_size}_q{self.query_size}_n{self.num_queries}"
        return tag + (f"_scaled{self.scale}" if self.scale != 1 else "")

    def scaled(self, factor: int = DESK_SCALE) -> "WorkloadSpec":
        return WorkloadSpec(max(1, self.ref_size // factor), max(1, self.query_size // factor),
                            max(1, self.num_queries // factor), self.generator, self.path, self.stride,
                            self.scale * factor)


def table3_grid(scale: int = 1) -> list[WorkloadSpec]:
    """All 64 size combinations, optionally as their scaled twins."""
    specs = [WorkloadSpec(r, q, n) for r, q, n in
             itertools.product(TABLE3_REF_SIZES, TABLE3_QUERY_SIZES, TABLE3_NUM_QUERIES)]
    return [s.scaled(scale) for s in specs] if scale != 1 else specs


def safe_bound(dtype: str, query_size: int, metric: str = "abs_diff") -> int:
    """Largest walk amplitude whose scores fit the crossbar score words.

    A cumulative score never exceeds query_size times the largest point
    distance, and must stay below the saturation value used at the first column.
    """
    if not is_integer_dtype(dtype):
        return 1 << 20
    lo, hi = dtype_range(dtype)
    limit = (1 << (dtype_bits(dtype) - 1)) - 2
    per_cell = limit // query_size
    b = per_cell // 2 if metric == "abs_diff" else math.isqrt(per_cell) // 2
    return max(1, min(b, hi, -lo - 1))


def generate(spec: WorkloadSpec, dtype: str = "int32", metric: str = "abs_diff",
             seed: int = 0) -> tuple[TimeSeries, list[TimeSeries]]:
    """Reference and queries for ``spec``; same seed, same data."""
    if spec.generator == "file":
        series = ingest(spec.path, dtype=dtype)
        if spec.ref_size > len(series):
            raise ValueError(f"file holds {len(series)} samples, workload needs {spec.ref_size}")
        ref = series.window(0, spec.ref_size)
        qs = slice_queries(series, spec.query_size, spec.num_queries, spec.stride)
        return ref, list(qs.queries)
    bound = safe_bound(dtype, spec.query_size, metric)
    step = max(1, min(4, bound // 4))
    ref = random_walk(spec.ref_size, dtype, step=step, bound=bound, seed=[seed, 0])
    queries = [random_walk(spec.query_size, dtype, step=step, bound=bound, seed=[seed, k + 1])
               for k in range(spec.num_queries)]
    return ref, queries


@dataclass
class Evaluation:
    spec: WorkloadSpec
    columns: int
    ledger: CostLedger
    distances: list | None = None     # crossbar distances (bit-exact engine only)
    engine: str = "analytic"


@lru_cache(maxsize=32)
def calibrate_fractions(dtype: str, metric: str, seed: int = 0, open_start: bool = False) -> dict[str, float]:
    """Share of predicated writes that fire, measured on a small simulated run."""
    spec = WorkloadSpec(64, 16, 8)
    ref, queries = generate(spec, dtype, metric, seed)
    run = run_batch(ref, queries, total_columns=SUBARRAY_COLS, metric=metric, open_start=open_start)
    return run.ledger.gated_fractions()


def evaluate(spec: WorkloadSpec, columns: int, dtype: str = "int32", metric: str = "abs_diff", *,
             engine: str = "analytic", seed: int = 0, open_start: bool = False, trace=None) -> Evaluation:
    """Ledger of ``spec`` on a device with ``columns`` compute columns."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if engine == "bitexact":
        ref, queries = generate(spec, dtype, metric, seed)
        run = run_batch(ref, queries, total_columns=columns, metric=metric, open_start=open_start, trace=trace)
        return Evaluation(spec, columns, run.ledger, [r.distance for r in run.results], engine)
    if engine != "analytic":
        raise ValueError(f"unknown engine {engine!r}")
    width = dtype_bits(dtype)
    mp = plan(columns, spec.ref_size, spec.num_queries)
    fr = calibrate_fractions(dtype, metric, seed, open_start)
    led = estimate_ledger(mp, [spec.query_size] * spec.num_queries, width, metric,
                          open_start=open_start, gated_fractions=fr)
    return Evaluation(spec, columns, led, None, engine)


def pum_sdtw(ref, queries, ref_size: int, query_sizes, n_queries: int, mode: str = "query_filtering",
             dist_metric: str = "abs_diff", anomaly_thres=None, *, dtype: str | None = None,
             columns: int | None = None, open_start: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Host entry point: returns ``(anomalies, distances)``.

    ``queries`` is the concatenation of all queries, ``query_sizes`` their
    lengths (or one length shared by all). ``ref_size`` is a scalar. In
    ``self_join`` mode ``queries`` is ignored and every window of
    ``query_sizes[0]`` samples of the reference is compared with the rest of
    the series. Integer data of up to 32 bits runs on the simulated crossbar
    when ``columns`` is given; everything else runs on the host.
    """
    ref_arr = np.asarray(ref)
    if ref_arr.ndim != 1 or len(ref_arr) < ref_size:
        raise ValueError("ref holds fewer than ref_size samples")
    dtype = dtype or _dtype_of(ref_arr)
    ref_ts = TimeSeries(ref_arr[:ref_size], dtype)
    sizes = [int(query_sizes)] * n_queries if np.ndim(query_sizes) == 0 else [int(s) for s in query_sizes]
    if mode == "self_join":
        res = run_self_join(ref_ts, sizes[0], dist_metric, anomaly_thres, open_start=open_start)
    elif mode == "query_filtering":
        if len(sizes) != n_queries:
            raise ValueError("need one query size per query")
        flat = np.asarray(queries)
        if flat.size < sum(sizes):
            raise ValueError("queries hold fewer samples than query_sizes describe")
        bounds = np.cumsum([0] + sizes)
        qs = [TimeSeries(flat[bounds[k]:bounds[k + 1]], dtype) for k in range(n_queries)]
        if columns is not None and is_integer_dtype(dtype) and dtype_bits(dtype) <= 32:
            res = run_batch(ref_ts, qs, total_columns=columns, metric=dist_metric, threshold=anomaly_thres,
                            open_start=open_start).results
        else:
            res = run_query_filtering(ref_ts, QuerySet(qs), dist_metric, anomaly_thres, open_start=open_start)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    distances = np.array([r.distance if r.distance is not None else np.nan for r in res],
                         dtype=float if any(r.distance is None for r in res) or not is_integer_dtype(dtype) else np.int64)
    anomalies = np.array([r.anomaly for r in res], dtype=bool)
    return anomalies, distances


def _dtype_of(arr: np.ndarray) -> str:
    names = {np.dtype(np.int8): "int8", np.dtype(np.int16): "int16", np.dtype(np.int32): "int32",
             np.dtype(np.int64): "int64", np.dtype(np.float32): "fp32", np.dtype(np.float64): "fp64"}
    try:
        return names[arr.dtype]
    except KeyError:
        raise ValueError(f"unsupported sample type {arr.dtype}") from None
