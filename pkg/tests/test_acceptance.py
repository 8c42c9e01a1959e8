"""Acceptance criteria 1 to 10. Each test prints one PASS/FAIL line at the end of the run."""
import dataclasses
import math
import time

import numpy as np
import pytest

from pumsdtw import core
from pumsdtw.cli import main
from pumsdtw.core import StreamWorkspace, sdtw_full, sdtw_stream
from pumsdtw.costmodel import (REFERENCE_ENDURANCE, TECH_PRESETS, YEAR_S, DeviceConfig, TechParams,
                               endurance_estimate, sensitivity_report, total_energy, total_time)
from pumsdtw.crossbar import CrossbarArray, Slice, unpack_bits
from pumsdtw.series import TimeSeries
from pumsdtw.wavefront import run_batch
from pumsdtw.workloads import WorkloadSpec, evaluate, safe_bound, table3_grid

SCALED = WorkloadSpec(2048, 128, 2048)


def wrap(v, w):
    v &= (1 << w) - 1
    return v - (1 << w) if v >> (w - 1) else v


def loaded(w, *cols):
    X = CrossbarArray(len(cols[0]))
    slices = [Slice(k * w, w) for k in range(4)]
    for s, v in zip(slices, cols):
        X.write_words(s, v)
    return X, slices


def flags(X, n):
    return unpack_bits(X.sa.overflow, n).astype(bool)


@pytest.mark.criterion(1)
def test_end_to_end_bit_exact(record_property):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    cases = mismatches = batched = 0
    while cases < 1000:
        dtype = ("int16", "int32")[cases % 2]
        metric = ("abs_diff", "square_diff")[(cases // 2) % 2]
        m = int(rng.integers(1, 257))
        lens = rng.integers(1, 65, int(rng.integers(1, 5)))
        b = safe_bound(dtype, int(lens.max()), metric)
        ref = TimeSeries(rng.integers(-b, b + 1, m), dtype)
        qs = [TimeSeries(rng.integers(-b, b + 1, int(n)), dtype) for n in lens]
        if cases % 4 < 2 or m == 1:
            cols = int(rng.integers(m, 3 * m + 1))
        else:
            cols = int(rng.integers(max(1, m // 8), m))
            batched += 1
        got = [r.distance for r in run_batch(ref, qs, total_columns=cols, metric=metric).results]
        want = [sdtw_full(q.tolist(), ref.tolist(), metric) for q in qs]
        mismatches += got != want
        cases += 1
    took = time.perf_counter() - t0
    record_property("detail", f"{cases} cases ({batched} batched), {mismatches} mismatches, {took:.0f} s")
    assert mismatches == 0
    assert took < 300


@pytest.mark.criterion(2)
def test_bitserial_oracle(record_property):
    t0 = time.perf_counter()
    bad = 0
    # exhaustive add and sub at width 8
    a, b = (v.ravel() for v in np.meshgrid(np.arange(-128, 128), np.arange(-128, 128)))
    X, (A, B, O, _) = loaded(8, a, b)
    X.bitserial_add(A, B, O)
    s = a + b
    bad += np.count_nonzero(X.peek_words(O) != [wrap(int(v), 8) for v in s])
    bad += np.count_nonzero(flags(X, a.size) != ((s < -128) | (s > 127)))
    X.clear_overflow()
    X.bitserial_sub(A, B, O)
    d = a - b
    bad += np.count_nonzero(X.peek_words(O) != [wrap(int(v), 8) for v in d])
    bad += np.count_nonzero(flags(X, a.size) != ((d < -128) | (d > 127)))
    # exhaustive abs at width 8
    a = np.arange(-127, 128)
    X, (A, O, _, _) = loaded(8, a)
    X.bitserial_abs(A, O)
    bad += np.count_nonzero(X.peek_words(O) != np.abs(a)) + np.count_nonzero(flags(X, a.size))
    # exhaustive |a|^2 for |a| <= 255 at width 32
    a = np.arange(-255, 256)
    X, (A, B, O, _) = loaded(32, a)
    X.bitserial_abs(A, B)
    X.bitserial_square(B, O)
    bad += np.count_nonzero(X.peek_words(O) != a * a) + np.count_nonzero(flags(X, a.size))
    # 10^5 random cases per operation at widths 16 and 32
    rng = np.random.default_rng(2)
    n = 100_000
    for w in (16, 32):
        lo, hi = -(1 << (w - 1)), (1 << (w - 1)) - 1
        a, b = rng.integers(lo, hi + 1, n), rng.integers(lo, hi + 1, n)
        X, (A, B, O, _) = loaded(w, a, b)
        for op, ref in ((X.bitserial_add, a + b), (X.bitserial_sub, a - b)):
            X.clear_overflow()
            op(A, B, O)
            bad += np.count_nonzero(X.peek_words(O) != [wrap(int(v), w) for v in ref])
            bad += np.count_nonzero(flags(X, n) != ((ref < lo) | (ref > hi)))
        X.clear_overflow()
        a = np.where(a == lo, lo + 1, a)
        X, (A, O, _, _) = loaded(w, a)
        X.bitserial_abs(A, O)
        bad += np.count_nonzero(X.peek_words(O) != np.abs(a)) + np.count_nonzero(flags(X, n))
        a = rng.integers(0, 1 << ((w - 1) // 2 + 1), n)
        X, (A, O, _, _) = loaded(w, a)
        X.bitserial_square(A, O)
        sq = a * a
        fits = sq <= hi
        bad += np.count_nonzero((X.peek_words(O) != sq) & fits)
        bad += np.count_nonzero(flags(X, n) != ~fits)
    took = time.perf_counter() - t0
    record_property("detail", f"{bad} mismatches, {took:.1f} s")
    assert bad == 0
    assert took < 60


@pytest.mark.criterion(3)
def test_stream_footprint(record_property, monkeypatch):
    assert [f.name for f in dataclasses.fields(StreamWorkspace)] == ["s_cur", "s_diag", "s_up", "s_left"]
    sizes = []
    real = StreamWorkspace.allocate.__func__

    def counting(cls, m, dtype=np.int64):
        sizes.append(m)
        return real(cls, m, dtype)

    monkeypatch.setattr(core.StreamWorkspace, "allocate", classmethod(counting))
    sdtw_stream([1, 2, 3], list(range(11)))
    ws = real(StreamWorkspace, 11)
    sdtw_stream([1, 2, 3], list(range(11)), workspace=ws)
    assert sizes == [11]
    assert [v.shape for v in ws.vectors()] == [(11,)] * 4
    assert ws.s_up.any()  # the supplied workspace is the one used
    rng = np.random.default_rng(3)
    bad = 0
    for k in range(10_000):
        q = rng.integers(-50, 51, int(rng.integers(1, 17))).tolist()
        r = rng.integers(-50, 51, int(rng.integers(1, 41))).tolist()
        metric = ("abs_diff", "square_diff")[k % 2]
        bad += sdtw_stream(q, r, metric, open_start=k % 3 == 0) != sdtw_full(q, r, metric, open_start=k % 3 == 0)
    record_property("detail", f"4 working vectors of length M, {bad} mismatches in 10^4 cases")
    assert bad == 0


@pytest.mark.criterion(4)
def test_column_scaling(record_property):
    tech = TECH_PRESETS["baseline"]
    t = {c: total_time(evaluate(SCALED, c).ledger, tech) for c in (32768, 65536, 131072, 262144)}
    ratios = {c: t[2 * c] / t[c] for c in (32768, 65536, 131072)}
    record_property("detail", "t(2C)/t(C) = " + ", ".join(f"{c // 1024}K: {r:.3f}" for c, r in ratios.items()))
    assert all(abs(r - 0.5) <= 0.025 for r in ratios.values())


@pytest.mark.criterion(5)
def test_workload_proportionality(record_property):
    tech = TECH_PRESETS["baseline"]
    columns = DeviceConfig.from_preset("embedded").columns // 64
    grid = table3_grid(64)
    x = np.array([s.ref_size * s.query_size * s.num_queries for s in grid], dtype=float)
    y = np.array([total_time(evaluate(s, columns).ledger, tech) for s in grid])
    k = (x @ y) / (x @ x)
    r2 = 1 - ((y - k * x) ** 2).sum() / ((y - y.mean()) ** 2).sum()
    record_property("detail", f"R^2 = {r2:.5f} over {len(grid)} workloads on {columns} columns")
    assert r2 >= 0.99


@pytest.mark.criterion(6)
def test_latency_sensitivity(record_property):
    rep = sensitivity_report(evaluate(SCALED, 32768).ledger)
    record_property("detail", f"10x rd_lat {rep.read_slowdown:.2f}x, 10x wr_lat {rep.write_slowdown:.2f}x "
                              f"(reference 4.7x, 6.5x)")
    assert rep.write_slowdown > rep.read_slowdown


@pytest.mark.criterion(7)
def test_energy_split_stable(record_property):
    spec = WorkloadSpec(256, 16, 16)
    shares = []
    for seed in range(5):
        rep = sensitivity_report(evaluate(spec, 512, engine="bitexact", seed=seed).ledger)
        for line in rep.lines():
            print(line)
        shares.append(rep.write_energy_share)
    spread = max(abs(s - np.mean(shares)) for s in shares)
    record_property("detail", f"write share {np.mean(shares):.4f} +- {spread:.4f} over 5 seeds "
                              f"(excess over read {rep.write_energy_excess:+.2f}, reference +0.19)")
    assert spread <= 0.01


@pytest.mark.criterion(8)
def test_endurance_order_of_magnitude(record_property):
    device = DeviceConfig.from_preset("embedded")
    led = evaluate(SCALED, device.columns).ledger
    e = endurance_estimate(led, 10 * YEAR_S, device, tech=TechParams(5, 5, 50, 70))
    record_property("detail", f"{e.mean_writes:.2e} mean writes per cell over 10 years "
                              f"(reference {REFERENCE_ENDURANCE:.0e})")
    assert abs(math.log10(e.mean_writes / REFERENCE_ENDURANCE)) <= 1


@pytest.mark.criterion(9)
def test_cost_linearity(record_property):
    led = evaluate(SCALED, 32768).ledger
    base = TechParams(5, 10, 50, 70)
    points = (1, 3, 5)
    for field, fn in (("rd_lat", total_time), ("wr_lat", total_time),
                      ("rd_energy", total_energy), ("wr_energy", total_energy)):
        y = [fn(led, base.replace(**{field: v})) for v in points]
        slope = (y[1] - y[0]) // (points[1] - points[0])
        intercept = y[0] - slope * points[0]
        assert [intercept + slope * v for v in points] == y
    record_property("detail", f"exact linear reconstruction at {len(points)} points on 4 axes")


@pytest.mark.criterion(10)
def test_deterministic_reports(record_property, tmp_path):
    run = ["run", "--ref-size", "256", "--query-size", "16", "--num-queries", "8", "--crossbars", "1",
           "--seed", "11"]
    sweep = ["sweep", "--ref-size", "512,1024", "--query-size", "32", "--num-queries", "64", "--crossbars", "1,2",
             "--rd-lat", "1,5", "--seed", "11"]
    files = []
    for k in range(2):
        d = tmp_path / str(k)
        assert main(run + ["--out", str(d)]) == 0
        assert main(sweep + ["--out", str(d / "sweep.csv")]) == 0
        files.append([(d / f).read_bytes() for f in ("distances.csv", "report.csv", "sweep.csv")])
    record_property("detail", "run and sweep CSVs byte-identical across two runs")
    assert files[0] == files[1]
