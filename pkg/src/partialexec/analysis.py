"""Benchmarks over the bundled workloads, the ratio sweep, and the overhead report.

The closed-form model lives in :mod:`partialexec.latency` and is re-exported
here.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .clock import RealClock, VirtualClock
from .decoder import TraceDecoder
from .latency import (DegenerateModel, LatencyModel, ModelIllFormed, best_case_improvement, improvement,
                      improvement_curve, l_new_bounds, l_old, round_bounds)
from .parser import GrammarId
from .runtime import DEFAULT_DRAIN_TIMEOUT_US
from .scheduler import Mode, Request, RoundRecord, Scheduler, ServeResult
from .tools import builtin_registry
from .tracegen import sleep_rounds
from .workloads import WorkloadSpec, resolve, run_workload

log = logging.getLogger(__name__)

DEFAULT_RATIOS = (0.01, 0.1, 0.5, 1, 2, 10, 100)

__all__ = ["BenchResult", "BenchStats", "DEFAULT_RATIOS", "DegenerateModel", "LatencyModel", "ModelIllFormed",
           "OverheadReport", "SweepRow", "best_case_improvement", "detection_speedup", "improvement",
           "improvement_curve", "l_new_bounds", "l_old", "round_bounds", "run_benchmark", "summarize",
           "sweep", "overhead_report", "write_bars", "write_csv", "write_sweep"]


@dataclass
class BenchResult:
    workload: str
    mode: Mode
    run: int
    total_latency_us: int
    rounds: list[RoundRecord] = field(default_factory=list)
    status: str = "ok"
    error: str | None = None
    time_to_abort_us: int | None = None


@dataclass(frozen=True)
class BenchStats:
    workload: str
    mode: Mode
    runs: int
    mean_us: float
    stddev_us: float


def _one(spec: WorkloadSpec, mode: Mode, run: int, clock_mode: str | None) -> BenchResult:
    clock = RealClock() if (clock_mode or spec.clock) == "real" else VirtualClock()
    try:
        res = run_workload(spec, mode, clock=clock)
    except Exception as exc:  # a broken run is recorded, the batch continues
        log.error("%s %s run %d failed: %s", spec.name, mode.value, run, exc)
        return BenchResult(spec.name, mode, run, 0, status="failed", error=f"{type(exc).__name__}: {exc}")
    return BenchResult(spec.name, mode, run, res.total_latency_us, res.rounds, res.status, res.error,
                       res.time_to_abort_us)


def run_benchmark(workloads: str | Path | WorkloadSpec | Iterable, runs: int = 1,
                  modes: Sequence[Mode | str] = (Mode.PARTIAL, Mode.SEQUENTIAL),
                  csv_path: str | Path | None = None, clock_mode: str | None = None,
                  parallel: bool = False) -> list[BenchResult]:
    """Serve each workload ``runs`` times per mode; optionally write the CSV."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if isinstance(workloads, (str, Path, WorkloadSpec)):
        workloads = [workloads]
    specs = [w if isinstance(w, WorkloadSpec) else resolve(w) for w in workloads]
    jobs = [(spec, Mode(mode), run) for spec in specs for mode in modes for run in range(runs)]
    if parallel:
        with ThreadPoolExecutor() as pool:
            results = list(pool.map(lambda j: _one(*j, clock_mode), jobs))
    else:
        results = [_one(*j, clock_mode) for j in jobs]
    if csv_path is not None:
        write_csv(results, csv_path)
    return results


def write_csv(results: Iterable[BenchResult], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["workload", "mode", "run", "latency_us"])
        for r in results:
            w.writerow([r.workload, r.mode.value, r.run, r.total_latency_us])


def summarize(results: Iterable[BenchResult]) -> list[BenchStats]:
    """Mean and population standard deviation per (workload, mode), in first-seen order."""
    groups: dict[tuple[str, Mode], list[int]] = {}
    for r in results:
        groups.setdefault((r.workload, r.mode), []).append(r.total_latency_us)
    out = []
    for (name, mode), lat in groups.items():
        a = np.asarray(lat, dtype=float)
        out.append(BenchStats(name, mode, len(a), float(a.mean()), float(a.std())))
    return out


def write_bars(stats: Iterable[BenchStats], path: str | Path) -> None:
    """Plot-ready bar data: workload, mode, mean and stddev in milliseconds."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in stats:
            fh.write(f"{s.workload}\t{s.mode.value}\t{s.mean_us / 1000:.3f}\t{s.stddev_us / 1000:.3f}\n")


def improvement_of(stats: Sequence[BenchStats], workload: str) -> float:
    """Mean sequential latency over mean partial latency, minus one."""
    by_mode = {s.mode: s.mean_us for s in stats if s.workload == workload}
    return by_mode[Mode.SEQUENTIAL] / by_mode[Mode.PARTIAL] - 1


def detection_speedup(partial: ServeResult, sequential: ServeResult) -> float:
    """How much sooner a bad call is rejected with partial execution (fraction, e.g. 3.9 = 390%)."""
    if partial.time_to_abort_us is None or sequential.time_to_abort_us is None:
        raise ValueError("both runs must have aborted")
    return sequential.time_to_abort_us / partial.time_to_abort_us - 1


@dataclass(frozen=True)
class SweepRow:
    r: float
    theory: float
    measured: float
    l_partial_us: int
    l_sequential_us: int


def sweep(r_values: Iterable[float] = DEFAULT_RATIOS, n_rounds: int = 3, g_per_round_us: int = 1_000_000,
          token_us: int | None = None) -> list[SweepRow]:
    """Measured vs best-case improvement for synthetic traces with tool/decode ratio ``r``.

    Every tool round decodes for ``g_per_round_us`` and runs one sleep of
    ``r * g_per_round_us``; the final round is a single token.
    """
    token_us = token_us or max(1, g_per_round_us // 200)
    rows = []
    for r in r_values:
        if r <= 0:
            raise ValueError(f"ratio must be positive, got {r}")
        tool_us = round(r * g_per_round_us / 1000) * 1000
        trace = sleep_rounds([tool_us] * n_rounds, g_per_round_us, token_us)
        drain = max(DEFAULT_DRAIN_TIMEOUT_US, 2 * tool_us)
        lat = {}
        for mode in (Mode.PARTIAL, Mode.SEQUENTIAL):
            clock = VirtualClock()
            sched = Scheduler(builtin_registry(), TraceDecoder(trace, clock), clock, GrammarId.FENCE,
                              drain_timeout_us=drain)
            res = sched.serve(Request("sweep", mode, max_rounds=n_rounds + 1))
            if res.status != "ok":
                raise RuntimeError(f"sweep run at r={r} failed: {res.error}")
            lat[mode] = res.total_latency_us
        rows.append(SweepRow(r, improvement(r), lat[Mode.SEQUENTIAL] / lat[Mode.PARTIAL] - 1,
                             lat[Mode.PARTIAL], lat[Mode.SEQUENTIAL]))
    return rows


def write_sweep(rows: Iterable[SweepRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_sweep(rows))


def format_sweep(rows: Iterable[SweepRow]) -> str:
    return "".join(f"{row.r:g}\t{row.theory:.6f}\t{row.measured:.6f}\n" for row in rows)


@dataclass(frozen=True)
class OverheadReport:
    workload: str
    overhead_us: float
    wall_us: float

    @property
    def fraction(self) -> float:
        return self.overhead_us / self.wall_us if self.wall_us else 0.0


def overhead_report(workload: str | Path | WorkloadSpec = "CodeGen", mode: Mode | str = Mode.PARTIAL,
                    backend: str = "thread") -> OverheadReport:
    """Share of a real-clock serve spent parsing and dispatching to tools."""
    spec = workload if isinstance(workload, WorkloadSpec) else resolve(workload)
    res = run_workload(spec, mode, clock=RealClock(), backend=backend)
    if res.status == "failed":
        raise RuntimeError(f"{spec.name} failed: {res.error}")
    return OverheadReport(spec.name, res.overhead_us, res.wall_us)
