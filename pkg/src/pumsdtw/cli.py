"""Command-line front end.

``pumsdtw run`` computes distances for one workload on the host and on the
simulated crossbar, checks they agree and writes a cost report.
``pumsdtw sweep`` prices workloads over device and technology grids.

Exit codes: 0 ok, 1 usage, 2 I/O or parse error, 3 host/crossbar mismatch,
4 arithmetic overflow.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import os
import sys
from pathlib import Path

from .core import METRICS, AccumulatorOverflowError, run_query_filtering, run_self_join
from .costmodel import (DEVICE_PRESETS, RD_ENERGY_GRID, LATENCY_GRID, TECH_PRESETS, WR_ENERGY_GRID,
                        CROSSBAR_COLUMNS, TechParams, total_energy, total_time)
from .ledger import CostLedger
from .mapper import plan
from .series import DTYPES, QuerySet, SeriesFormatError, TimeSeries, ingest, is_integer_dtype, slice_queries
from .wavefront import CrossbarOverflowError, jsonl_trace, run_batch
from .workloads import WorkloadSpec, evaluate, generate, table3_grid

log = logging.getLogger("pumsdtw")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_MISMATCH, EXIT_OVERFLOW = 0, 1, 2, 3, 4
PRESET_DIR_ENV = "PUMSDTW_PRESET_DIR"

REPORT_COLUMNS = ("workload_id", "ref_size", "query_size", "num_queries", "num_crossbars", "rd_lat", "wr_lat",
                  "rd_energy", "wr_energy", "time_ns", "energy_pJ", "mean_writes_per_cell", "max_writes_per_cell")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _csv_list(kind):
    def parse(text: str):
        try:
            return [kind(x) for x in str(text).split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated values, got {text!r}") from None
    return parse


def _common(p: argparse.ArgumentParser, listy: bool) -> None:
    num = _csv_list(float) if listy else float
    ints = _csv_list(int) if listy else int
    p.add_argument("--config", help="key=value file with defaults for any long option")
    p.add_argument("--mode", choices=("query_filtering", "self_join"), default="query_filtering")
    p.add_argument("--metric", choices=METRICS, default="abs_diff")
    p.add_argument("--dtype", choices=tuple(DTYPES), default="int32")
    p.add_argument("--crossbars", type=ints, help="number of 256x256 crossbars (overrides --preset)")
    p.add_argument("--preset", default=None,
                   help=f"device preset {sorted(DEVICE_PRESETS)} or a file name in ${PRESET_DIR_ENV}")
    p.add_argument("--tech", default="baseline", help=f"technology preset {sorted(TECH_PRESETS)}")
    p.add_argument("--rd-lat", type=num, help="ns per read phase")
    p.add_argument("--wr-lat", type=num, help="ns per write phase")
    p.add_argument("--rd-energy", type=num, help="pJ per bit read")
    p.add_argument("--wr-energy", type=num, help="pJ per bit written")
    p.add_argument("--threshold", type=float, help="flag queries whose distance exceeds this")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--open-start", action="store_true", help="score the first query row against every column")
    p.add_argument("--ref-size", dest="ref_size", type=ints, help="synthetic reference length")
    p.add_argument("--query-size", type=ints)
    p.add_argument("--num-queries", type=ints)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pumsdtw", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    r = sub.add_parser("run", help="one workload, host and crossbar")
    _common(r, listy=False)
    r.add_argument("--ref", help="reference series file (CSV or TSA1)")
    r.add_argument("--queries", help="series file cut into queries (default: the reference)")
    r.add_argument("--stride", type=int)
    r.add_argument("--out", default="pumsdtw-out", help="output directory")
    r.add_argument("--trace", help="write one JSON line per wavefront iteration to this file")
    r.add_argument("--oracle-only", action="store_true", help="skip the crossbar simulation")
    s = sub.add_parser("sweep", help="price workloads over device and technology grids")
    _common(s, listy=True)
    s.add_argument("--table3", action="store_true", help="use the 64-point Table 3 workload grid")
    s.add_argument("--scale", type=int, default=1, help="divide every Table 3 size by this factor")
    s.add_argument("--tech-grid", action="store_true", help="sweep the full technology grid")
    s.add_argument("--engine", choices=("analytic", "bitexact"), default="analytic")
    s.add_argument("--out", default="-", help="CSV file, '-' for stdout")
    s.add_argument("--trace", help=argparse.SUPPRESS)
    return p


# ------------------------------------------------------------ configuration

def read_config(path: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment. Keys use option names without dashes."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key=value")
            k, v = (x.strip() for x in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cfg = read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for k, v in cfg.items():
        if k not in known or k in ("config", "help"):
            raise UsageError(f"unknown config key {k!r}")
        a = known[k]
        if a.const is True and a.nargs == 0:
            defaults[k] = v.lower() in ("1", "true", "yes", "on")
        else:
            try:
                defaults[k] = a.type(v) if a.type else v
            except (ValueError, argparse.ArgumentTypeError) as e:
                raise UsageError(f"config key {k}: {e}") from None
            if a.choices and defaults[k] not in a.choices:
                raise UsageError(f"config key {k}: {v!r} not in {list(a.choices)}")
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def resolve_crossbars(preset: str | None, crossbars) -> int | list[int]:
    if crossbars is not None:
        return crossbars
    name = preset or "embedded"
    pdir = os.environ.get(PRESET_DIR_ENV)
    if pdir:
        f = Path(pdir) / f"{name}.conf"
        if f.is_file():
            cfg = read_config(str(f))
            if "crossbars" not in cfg:
                raise UsageError(f"{f}: no crossbars key")
            return int(cfg["crossbars"])
    if name not in DEVICE_PRESETS:
        raise UsageError(f"unknown device preset {name!r}")
    return DEVICE_PRESETS[name]


def resolve_tech(args) -> TechParams:
    if args.tech not in TECH_PRESETS:
        raise UsageError(f"unknown technology preset {args.tech!r}")
    base = TECH_PRESETS[args.tech]
    kw = {k: getattr(args, k) for k in ("rd_lat", "wr_lat", "rd_energy", "wr_energy") if getattr(args, k) is not None}
    try:
        return base.replace(**kw, name=base.name if not kw else "custom")
    except ValueError as e:
        raise UsageError(str(e)) from None


# ------------------------------------------------------------ reports

def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(int(x)) if x.is_integer() and abs(x) < 2 ** 53 else format(x, ".12g")
    return str(x)


def report_row(spec: WorkloadSpec, crossbars: int, tech: TechParams, ledger: CostLedger) -> list[str]:
    return [_fmt(v) for v in (
        spec.workload_id, spec.ref_size, spec.query_size, spec.num_queries, crossbars,
        float(tech.rd_lat), float(tech.wr_lat), float(tech.rd_energy), float(tech.wr_energy),
        float(total_time(ledger, tech)), float(total_energy(ledger, tech)),
        float(round(ledger.mean_writes_per_cell, 9)), float(ledger.max_cell_writes))]


def write_report(rows, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    w.writerows(rows)


# ------------------------------------------------------------ commands

def _load_inputs(args):
    if args.ref:
        ref = ingest(args.ref, dtype=args.dtype)
        src = ingest(args.queries, dtype=args.dtype) if args.queries else ref
        if args.mode == "self_join":
            return ref, [], args.query_size or min(len(ref), 16)
        size = args.query_size or len(src)
        qs = slice_queries(src, size, args.num_queries, args.stride)
        return ref, list(qs.queries), size
    if args.queries:
        raise UsageError("--queries needs --ref")
    spec = WorkloadSpec(args.ref_size or 4096, args.query_size or 256, args.num_queries or 64)
    ref, queries = generate(spec, args.dtype, args.metric, args.seed)
    return ref, queries, spec.query_size


def _crossbar_self_join(ref: TimeSeries, m: int, metric: str, columns: int, open_start: bool):
    """Each window in turn is the reference for all windows outside its exclusion zone."""
    windows = [ref.window(k, m) for k in range(len(ref) - m + 1)]
    best: list = [None] * len(windows)
    ledger = CostLedger()
    for j, wj in enumerate(windows):
        idx = [i for i in range(len(windows)) if abs(i - j) >= m]
        if not idx:
            continue
        run = run_batch(wj, [windows[i] for i in idx], total_columns=columns, metric=metric, open_start=open_start)
        ledger = ledger.then(run.ledger)
        for i, r in zip(idx, run.results):
            if best[i] is None or r.distance < best[i]:
                best[i] = r.distance
    return best, ledger


def cmd_run(args) -> int:
    crossbars = resolve_crossbars(args.preset, args.crossbars)
    tech = resolve_tech(args)
    ref, queries, qsize = _load_inputs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.mode == "self_join":
        host = run_self_join(ref, qsize, args.metric, args.threshold, open_start=args.open_start)
    else:
        host = run_query_filtering(ref, QuerySet(queries), args.metric, args.threshold, open_start=args.open_start)
    crossbar = None
    ledger = None
    columns = CROSSBAR_COLUMNS * crossbars
    on_crossbar = is_integer_dtype(args.dtype) and args.dtype != "int64" and not args.oracle_only
    if not on_crossbar and not args.oracle_only:
        log.warning("notice: %s samples run on the host only; no crossbar report", args.dtype)
    if on_crossbar:
        trace_fh = open(args.trace, "w", encoding="utf-8") if args.trace else None
        try:
            if args.mode == "self_join":
                crossbar, ledger = _crossbar_self_join(ref, qsize, args.metric, columns, args.open_start)
            else:
                run = run_batch(ref, queries, total_columns=columns, metric=args.metric, threshold=args.threshold,
                                open_start=args.open_start, trace=jsonl_trace(trace_fh) if trace_fh else None)
                crossbar, ledger = [r.distance for r in run.results], run.ledger
        finally:
            if trace_fh:
                trace_fh.close()
    with open(out / "distances.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("query", "distance", "anomaly", "crossbar_distance"))
        for k, r in enumerate(host):
            xb = "" if crossbar is None or crossbar[k] is None else crossbar[k]
            w.writerow((r.query, "" if r.distance is None else _fmt(r.distance), int(r.anomaly), xb))
    mismatches = [] if crossbar is None else [k for k, r in enumerate(host) if r.distance != crossbar[k]]
    n_q = len(host)
    spec = WorkloadSpec(len(ref), qsize, max(1, n_q))
    if ledger is not None:
        with open(out / "report.csv", "w", encoding="utf-8", newline="") as fh:
            write_report([report_row(spec, crossbars, tech, ledger)], fh)
        mp = plan(columns, len(ref), n_q) if args.mode == "query_filtering" else plan(columns, qsize, n_q)
        with open(out / "plan.json", "w", encoding="utf-8") as fh:
            json.dump({"crossbars": crossbars, "tech": tech.name, "plan": mp.summary(),
                       "ledger": ledger.summary()}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    flagged = sum(r.anomaly for r in host)
    print(f"{n_q} queries, {flagged} flagged; results in {out}")
    if mismatches:
        log.error("crossbar and host disagree on %d queries, first %s", len(mismatches), mismatches[:5])
        return EXIT_MISMATCH
    return EXIT_OK


def _sweep_workloads(args) -> list[WorkloadSpec]:
    if args.table3:
        return table3_grid(args.scale)
    refs = args.ref_size or [1024]
    qs = args.query_size or [64]
    ns = args.num_queries or [64]
    return [WorkloadSpec(r, q, n) for r, q, n in itertools.product(refs, qs, ns)]


def _tech_points(args) -> list[TechParams]:
    if args.tech not in TECH_PRESETS:
        raise UsageError(f"unknown technology preset {args.tech!r}")
    base = TECH_PRESETS[args.tech]
    if args.tech_grid:
        lists = [args.rd_lat or LATENCY_GRID, args.wr_lat or LATENCY_GRID,
                 args.rd_energy or RD_ENERGY_GRID, args.wr_energy or WR_ENERGY_GRID]
    else:
        lists = [args.rd_lat or [base.rd_lat], args.wr_lat or [base.wr_lat],
                 args.rd_energy or [base.rd_energy], args.wr_energy or [base.wr_energy]]
    try:
        return [TechParams(*p) for p in itertools.product(*(sorted(set(x)) for x in lists))]
    except ValueError as e:
        raise UsageError(str(e)) from None


def cmd_sweep(args) -> int:
    crossbars = resolve_crossbars(args.preset, args.crossbars)
    crossbars = sorted(set(crossbars if isinstance(crossbars, list) else [crossbars]))
    techs = _tech_points(args)
    specs = sorted(_sweep_workloads(args), key=lambda s: (s.ref_size, s.query_size, s.num_queries))
    if not specs or not techs or not crossbars:
        raise UsageError("empty sweep grid")
    rows = []
    for spec in specs:
        for xb in crossbars:
            ev = evaluate(spec, CROSSBAR_COLUMNS * xb, args.dtype, args.metric, engine=args.engine,
                          seed=args.seed, open_start=args.open_start)
            rows.extend(report_row(spec, xb, t, ev.ledger) for t in techs)
    buf = io.StringIO()
    write_report(rows, buf)
    if args.out == "-":
        sys.stdout.write(buf.getvalue())
    else:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s: %(message)s", stream=sys.stderr)
        return cmd_run(args) if args.command == "run" else cmd_sweep(args)
    except UsageError as e:
        print(f"pumsdtw: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (CrossbarOverflowError, AccumulatorOverflowError) as e:
        print(f"pumsdtw: overflow: {e}", file=sys.stderr)
        return EXIT_OVERFLOW
    except (OSError, SeriesFormatError) as e:
        print(f"pumsdtw: {e}", file=sys.stderr)
        return EXIT_IO
    except OverflowError as e:
        print(f"pumsdtw: overflow: {e}", file=sys.stderr)
        return EXIT_OVERFLOW
    except ValueError as e:
        print(f"pumsdtw: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
