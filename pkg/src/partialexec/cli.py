"""Command line: run workloads, benchmarks, sweeps and timeline reports.

Exit codes: 0 success, 1 serve or tool failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import analysis
from .clock import make_clock
from .scheduler import Mode, ServeResult
from .timeline import read_tsv, render_gantt, write_tsv
from .workloads import BUNDLED, WorkloadError, WorkloadSpec, resolve, run_workload

OK, FAILED, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _ratios(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError("ratios must be positive")
    return values


def _modes(text: str) -> list[Mode]:
    if text == "both":
        return [Mode.PARTIAL, Mode.SEQUENTIAL]
    return [Mode(text)]


def _load(name: str) -> WorkloadSpec:
    try:
        return resolve(name)
    except WorkloadError as exc:
        raise UsageError(str(exc)) from exc


def _ms(us: float) -> str:
    return f"{us / 1000:.1f}"


def print_result(res: ServeResult, out=None) -> None:
    out = out or sys.stdout
    print(res.response_text.rstrip("\n") if res.status != "failed" else f"FAILED: {res.error}", file=out)
    print(f"\n{'round':>5} {'g_ms':>9} {'tools':<24} {'t_ms':>9} {'post_eos_ms':>12}", file=out)
    for r in res.rounds:
        tools = ",".join(t.tool for t in r.tools) or "-"
        t_ms = "/".join(_ms(t) for t in r.t_times) or "-"
        print(f"{r.index:>5} {_ms(r.g_time):>9} {tools:<24} {t_ms:>9} {_ms(r.post_eos_wait):>12}", file=out)
    print(f"\nmode {res.mode.value}  status {res.status}  total {_ms(res.total_latency_us)} ms", file=out)
    if res.time_to_abort_us is not None:
        print(f"time to abort {_ms(res.time_to_abort_us)} ms", file=out)
    for w in res.warnings:
        print(f"warning: {w}", file=out)


def cmd_run(args) -> int:
    spec = _load(args.workload)
    clock = make_clock(args.clock or spec.clock)
    res = run_workload(spec, args.mode, clock=clock, backend=args.backend)
    print_result(res)
    if args.timeline:
        write_tsv(res.timeline, args.timeline)
    return FAILED if res.status == "failed" else OK


def cmd_bench(args) -> int:
    names = args.workloads or list(BUNDLED)
    specs = [_load(n) for n in names]
    results = analysis.run_benchmark(specs, args.runs, args.modes, args.csv, clock_mode=args.clock,
                                     parallel=args.parallel)
    stats = analysis.summarize(results)
    print(f"{'workload':<12} {'mode':<11} {'runs':>5} {'mean_ms':>10} {'stddev_ms':>10}")
    for s in stats:
        print(f"{s.workload:<12} {s.mode.value:<11} {s.runs:>5} {_ms(s.mean_us):>10} {s.stddev_us / 1000:>10.3f}")
    if set(args.modes) == {Mode.PARTIAL, Mode.SEQUENTIAL}:
        print()
        for spec in specs:
            print(f"{spec.name:<12} improvement {analysis.improvement_of(stats, spec.name):+.1%}")
    if args.bars:
        analysis.write_bars(stats, args.bars)
    if args.timeline:
        Path(args.timeline).mkdir(parents=True, exist_ok=True)
        for spec in specs:
            for mode in args.modes:
                res = run_workload(spec, mode, clock=make_clock(args.clock or spec.clock))
                write_tsv(res.timeline, Path(args.timeline) / f"{spec.name}.{mode.value}.tsv")
    failed = [r for r in results if r.status == "failed"]
    for r in failed:
        print(f"{r.workload} {r.mode.value} run {r.run} failed: {r.error}", file=sys.stderr)
    return FAILED if failed else OK


def cmd_sweep(args) -> int:
    rows = analysis.sweep(args.ratios, args.rounds, int(args.g_ms * 1000))
    print(f"{'r':>8} {'f_theory':>10} {'f_measured':>11}")
    for row in rows:
        print(f"{row.r:>8g} {row.theory:>10.4f} {row.measured:>11.4f}")
    if args.out:
        analysis.write_sweep(rows, args.out)
    return OK


def cmd_report(args) -> int:
    try:
        events = read_tsv(args.timeline)
    except OSError as exc:
        raise UsageError(f"cannot read timeline {args.timeline}: {exc.strerror}") from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if not events:
        raise UsageError(f"timeline {args.timeline} is empty")
    print(render_gantt(events, args.width))
    return OK


def cmd_overhead(args) -> int:
    rep = analysis.overhead_report(_load(args.workload), backend=args.backend)
    print(f"{rep.workload}: parse+dispatch {_ms(rep.overhead_us)} ms of {_ms(rep.wall_us)} ms wall "
          f"({rep.fraction:.2%})")
    return OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="partialexec", description=__doc__.splitlines()[0])
    p.add_argument("--list", action="store_true", help="list the bundled workloads and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    r = sub.add_parser("run", help="serve one workload and print a summary")
    r.add_argument("workload", help="bundled workload name or workload file")
    r.add_argument("--mode", type=Mode, choices=list(Mode), default=Mode.PARTIAL)
    r.add_argument("--timeline", help="write the timeline TSV here")
    r.add_argument("--clock", choices=["virtual", "real"])
    r.add_argument("--backend", choices=["thread", "process"], default="thread")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bench", help="repeat workloads and report latency statistics")
    b.add_argument("workloads", nargs="*", help="workload names or files (default: all bundled)")
    b.add_argument("--runs", type=_positive_int, default=1)
    b.add_argument("--modes", type=_modes, default=[Mode.PARTIAL, Mode.SEQUENTIAL],
                   help="partial, sequential or both (default)")
    b.add_argument("--csv", help="per-run CSV output")
    b.add_argument("--bars", help="per-workload mean/stddev output")
    b.add_argument("--timeline", help="directory for one timeline TSV per workload and mode")
    b.add_argument("--clock", choices=["virtual", "real"])
    b.add_argument("--parallel", action="store_true", help="run requests concurrently")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("sweep", help="measured vs best-case improvement over tool/decode ratios")
    s.add_argument("--ratios", type=_ratios, default=list(analysis.DEFAULT_RATIOS))
    s.add_argument("--rounds", type=_positive_int, default=3)
    s.add_argument("--g-ms", type=float, default=1000.0, help="decode time per round")
    s.add_argument("--out", help="write r, f_theory, f_measured as TSV")
    s.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="render a timeline TSV as a text Gantt chart")
    rep.add_argument("--timeline", required=True)
    rep.add_argument("--width", type=_positive_int, default=72)
    rep.set_defaults(func=cmd_report)

    o = sub.add_parser("overhead", help="real-clock parse and dispatch overhead")
    o.add_argument("workload", nargs="?", default="CodeGen")
    o.add_argument("--backend", choices=["thread", "process"], default="thread")
    o.set_defaults(func=cmd_overhead)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    if args.list:
        for name in BUNDLED:
            print(name)
        return OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
