"""Host-side time series containers, file formats and query slicing."""
from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DTYPES = {
    "int8": np.int8,
    "int16": np.int16,
    "int32": np.int32,
    "int64": np.int64,
    "fp32": np.float32,
    "fp64": np.float64,
}
INTEGER_DTYPES = ("int8", "int16", "int32", "int64")

# codes stored in the TSA1 header
DTYPE_CODES = {"int8": 1, "int16": 2, "int32": 3, "int64": 4, "fp32": 5, "fp64": 6}
_CODE_TO_DTYPE = {v: k for k, v in DTYPE_CODES.items()}

TSA1_MAGIC = b"TSA1"
TSA1_HEADER = struct.Struct("<4sIQ")  # magic, dtype code, length -> 16 bytes


class SeriesFormatError(ValueError):
    """Raised when a series file cannot be parsed."""


def dtype_bits(dtype: str) -> int:
    return np.dtype(DTYPES[dtype]).itemsize * 8


def is_integer_dtype(dtype: str) -> bool:
    return dtype in INTEGER_DTYPES


def dtype_range(dtype: str) -> tuple[int, int]:
    info = np.iinfo(DTYPES[dtype])
    return int(info.min), int(info.max)


@dataclass
class TimeSeries:
    """A sequence of samples stored in one of the supported data types."""

    samples: np.ndarray
    dtype: str = "int32"

    def __post_init__(self):
        if self.dtype not in DTYPES:
            raise ValueError(f"unsupported dtype {self.dtype!r}")
        arr = np.asarray(self.samples)
        if arr.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if arr.size < 1:
            raise ValueError("a time series needs at least one sample")
        if is_integer_dtype(self.dtype):
            if arr.dtype.kind == "f":
                if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
                    raise ValueError("integer series built from non-integral samples")
            lo, hi = dtype_range(self.dtype)
            if arr.min() < lo or arr.max() > hi:
                raise ValueError(f"samples out of range for {self.dtype}")
        self.samples = arr.astype(DTYPES[self.dtype])

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def width(self) -> int:
        return dtype_bits(self.dtype)

    def window(self, start: int, length: int) -> "TimeSeries":
        if start < 0 or length < 1 or start + length > len(self):
            raise ValueError(f"window [{start}, {start + length}) outside series of length {len(self)}")
        return TimeSeries(self.samples[start:start + length].copy(), self.dtype)

    def tolist(self) -> list:
        return self.samples.tolist()


@dataclass
class QuerySet:
    queries: list[TimeSeries]
    mode: str = "query_filtering"
    offsets: list[int] | None = field(default=None)

    def __post_init__(self):
        if self.mode not in ("query_filtering", "self_join"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def __len__(self) -> int:
        return len(self.queries)

    def __iter__(self):
        return iter(self.queries)

    def __getitem__(self, k):
        return self.queries[k]


def as_series(x, dtype: str = "int32") -> TimeSeries:
    if isinstance(x, TimeSeries):
        return x
    return TimeSeries(np.asarray(x), dtype)


def quantize(values: Sequence[float] | np.ndarray, dtype: str) -> np.ndarray:
    """Round to the target type: nearest, ties to even. Out-of-range values raise."""
    arr = np.asarray(values, dtype=np.float64)
    if not is_integer_dtype(dtype):
        return arr.astype(DTYPES[dtype])
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite sample cannot be quantized")
    rounded = np.rint(arr)
    lo, hi = dtype_range(dtype)
    bad = np.flatnonzero((rounded < lo) | (rounded > hi))
    if bad.size:
        raise ValueError(f"sample {int(bad[0])} ({arr[bad[0]]}) out of range for {dtype}")
    return rounded.astype(DTYPES[dtype])


# ---------------------------------------------------------------- file formats

def read_csv(path: str | os.PathLike, dtype: str = "int32") -> TimeSeries:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_csv(fh, dtype)


def parse_csv(fh: io.TextIOBase | Iterable[str], dtype: str = "int32") -> TimeSeries:
    values = []
    for lineno, raw in enumerate(fh, start=1):
        line = raw.strip()
        if not line:
            continue
        token = line.split(",")[0].strip()
        try:
            values.append(float(token) if not is_integer_dtype(dtype) or not _is_int_literal(token)
                          else int(token))
        except ValueError:
            if lineno == 1 and not values:
                continue  # header
            raise SeriesFormatError(f"line {lineno}: cannot parse {line!r} as a number") from None
    if not values:
        raise SeriesFormatError("no samples found")
    if is_integer_dtype(dtype) and all(isinstance(v, int) for v in values):
        lo, hi = dtype_range(dtype)
        for k, v in enumerate(values):
            if v < lo or v > hi:
                raise ValueError(f"sample {k} ({v}) out of range for {dtype}")
        return TimeSeries(np.array(values, dtype=DTYPES[dtype]), dtype)
    return TimeSeries(quantize(values, dtype), dtype)


def _is_int_literal(token: str) -> bool:
    t = token[1:] if token[:1] in "+-" else token
    return t.isdigit()


def write_csv(series: TimeSeries, path: str | os.PathLike, header: str | None = "value") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(header + "\n")
        for v in series.samples.tolist():
            fh.write(f"{v}\n")


def write_tsa1(series: TimeSeries, path: str | os.PathLike) -> None:
    data = series.samples.astype(np.dtype(DTYPES[series.dtype]).newbyteorder("<"))
    with open(path, "wb") as fh:
        fh.write(TSA1_HEADER.pack(TSA1_MAGIC, DTYPE_CODES[series.dtype], len(series)))
        fh.write(data.tobytes())


def read_tsa1(path: str | os.PathLike) -> TimeSeries:
    with open(path, "rb") as fh:
        head = fh.read(TSA1_HEADER.size)
        if len(head) != TSA1_HEADER.size:
            raise SeriesFormatError("truncated TSA1 header")
        magic, code, length = TSA1_HEADER.unpack(head)
        if magic != TSA1_MAGIC:
            raise SeriesFormatError(f"bad magic {magic!r}")
        if code not in _CODE_TO_DTYPE:
            raise SeriesFormatError(f"unknown dtype code {code}")
        dtype = _CODE_TO_DTYPE[code]
        np_dtype = np.dtype(DTYPES[dtype]).newbyteorder("<")
        body = fh.read()
    if len(body) != length * np_dtype.itemsize:
        raise SeriesFormatError(f"expected {length} samples, found {len(body) // np_dtype.itemsize}")
    return TimeSeries(np.frombuffer(body, dtype=np_dtype).astype(DTYPES[dtype]), dtype)


def ingest(path: str | os.PathLike, fmt: str | None = None, dtype: str = "int32") -> TimeSeries:
    """Load a series from CSV or TSA1 binary. ``fmt`` is guessed from the file when omitted.

    A TSA1 file carries its own dtype; it is converted to ``dtype`` with the same
    rounding and range rules as CSV input.
    """
    if fmt is None:
        with open(path, "rb") as fh:
            fmt = "tsa1" if fh.read(4) == TSA1_MAGIC else "csv"
    if fmt == "csv":
        return read_csv(path, dtype)
    if fmt == "tsa1":
        ts = read_tsa1(path)
        if ts.dtype == dtype:
            return ts
        return TimeSeries(quantize(ts.samples, dtype), dtype)
    raise ValueError(f"unknown format {fmt!r}")


# ---------------------------------------------------------------- query slicing

def slice_queries(series: TimeSeries, query_size: int, num_queries: int | None = None,
                  stride: int | None = None) -> QuerySet:
    """Cut fixed-size windows at a fixed stride. Windows never wrap past the end."""
    n = len(series)
    if query_size < 1 or query_size > n:
        raise ValueError(f"query_size {query_size} not in [1, {n}]")
    stride = query_size if stride is None else stride
    if stride < 1:
        raise ValueError("stride must be positive")
    available = (n - query_size) // stride + 1
    if num_queries is None:
        num_queries = available
    if num_queries > available:
        raise ValueError(f"{num_queries} queries requested, only {available} windows fit")
    offsets = [k * stride for k in range(num_queries)]
    return QuerySet([series.window(o, query_size) for o in offsets], "query_filtering", offsets)


def self_join_windows(series: TimeSeries, m: int) -> QuerySet:
    n = len(series)
    if m < 1 or m > n:
        raise ValueError(f"window {m} not in [1, {n}]")
    qs = slice_queries(series, m, None, 1)
    qs.mode = "self_join"
    return qs


def random_walk(length: int, dtype: str = "int32", *, step: int = 4, bound: int | None = None,
                seed: int | None = 0) -> TimeSeries:
    """Integer random walk with steps drawn uniformly from [-step, step].

    The walk reflects off +/-bound (defaults to the dtype range), so every
    sample stays inside it.
    """
    rng = np.random.default_rng(seed)
    if is_integer_dtype(dtype):
        lo, hi = dtype_range(dtype)
        bound = min(hi, -lo - 1) if bound is None else bound
    elif bound is None:
        bound = 1 << 20
    steps = rng.integers(-step, step + 1, size=length)
    out = np.empty(length, dtype=np.int64)
    x = 0
    for k, s in enumerate(steps.tolist()):
        x += s
        if x > bound:
            x = 2 * bound - x
        elif x < -bound:
            x = -2 * bound - x
        out[k] = x
    return TimeSeries(out.astype(DTYPES[dtype]), dtype)
