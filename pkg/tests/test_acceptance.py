"""Acceptance criteria 1-10. Each test prints one ``criterion N: PASS|FAIL`` line."""

from __future__ import annotations

import os
import random
import time

import numpy as np
import pytest

from partialexec.analysis import (DEFAULT_RATIOS, detection_speedup, improvement_of, overhead_report,
                                  run_benchmark, summarize, sweep)
from partialexec.clock import RealClock, VirtualClock
from partialexec.decoder import TraceDecoder
from partialexec.latency import (LatencyModel, best_case_improvement, improvement, improvement_curve,
                                 l_new_bounds, l_old)
from partialexec.parser import Grammar, GrammarId, parse_stream, parse_whole
from partialexec.plugins import ACCEPTED, Binding, Granularity, Observation, Plugin, PluginDescriptor
from partialexec.runtime import DEFAULT_DRAIN_TIMEOUT_US, WorkerRuntime
from partialexec.scheduler import Mode, Request, Scheduler, measure
from partialexec.tools import builtin_registry
from partialexec.tracegen import build_trace
from partialexec.workloads import BUNDLED, resolve, run_workload
from strategies import FRAGMENTS, GRAMMARS, split
from test_parser import EXHAUSTIVE, all_splits


@pytest.fixture
def verdict(capsys):
    """Call with (n, ok, detail); prints the line, then asserts."""
    def report(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail
    return report


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def test_criterion_1_model_exactness(verdict):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(0, 11))
        g = rng.integers(0, 10**7 + 1, n + 1)
        t = rng.integers(0, 10**7 + 1, n)
        m = LatencyModel(g.tolist(), t.tolist())
        # oracle: vectorized numpy sums, independent of the pure-python implementation
        old = float(g.sum() + t.sum())
        lower = float(np.maximum(g[:-1], t).sum() + g[-1])
        lo, hi = l_new_bounds(m)
        errs = [rel_err(l_old(m), old), rel_err(lo, lower), rel_err(hi, old)]
        if lower > 0:
            errs.append(rel_err(best_case_improvement(m), old / lower - 1) if old / lower - 1 else
                        abs(best_case_improvement(m)))
        worst = max(worst, *errs)
    ratios = rng.uniform(1e-3, 1e3, 1000)
    for r, f in improvement_curve(ratios.tolist()):
        worst = max(worst, rel_err(f, r if r <= 1 else 1 / r))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and improvement(1) == 1.0 and elapsed < 1.0
    verdict(1, ok, f"max rel err {worst:.1e}, f(1)={improvement(1)!r}, {elapsed:.2f} s")


def test_criterion_2_parser_chunk_invariance(verdict):
    rng = random.Random(2)
    t0 = time.perf_counter()
    mismatches = 0
    checked = 0
    for gid in GrammarId:
        grammar = GRAMMARS[gid]
        for _ in range(500):
            text = "".join(rng.choice(FRAGMENTS[gid]) for _ in range(rng.randint(0, 30)))
            whole = parse_whole(text, grammar)
            for _ in range(20):
                cuts = [rng.randint(0, len(text)) for _ in range(rng.randint(0, 12))]
                checked += 1
                mismatches += parse_stream(split(text, cuts), grammar) != whole
    exhaustive = 0
    for grammar, text in EXHAUSTIVE:
        whole = parse_whole(text, grammar)
        for tokens in all_splits(text):
            exhaustive += 1
            mismatches += parse_stream(tokens, grammar) != whole
    elapsed = time.perf_counter() - t0
    verdict(2, mismatches == 0 and elapsed < 30,
            f"{checked} random + {exhaustive} exhaustive partitions, {mismatches} mismatches, {elapsed:.1f} s")


def test_criterion_3_mode_equivalence(verdict):
    t0 = time.perf_counter()
    differing = []
    for name in BUNDLED:
        spec = resolve(name)
        p, s = run_workload(spec, Mode.PARTIAL), run_workload(spec, Mode.SEQUENTIAL)
        same = p.response_text == s.response_text and \
            [(n, o.text, o.success) for n, o in p.observations] == [(n, o.text, o.success) for n, o in s.observations]
        if not same:
            differing.append(name)
    elapsed = time.perf_counter() - t0
    verdict(3, not differing and elapsed < 10, f"differing: {differing or 'none'}, {elapsed:.1f} s")


def test_criterion_4_latency_sandwich(verdict):
    notes, bad = [], []
    for name in BUNDLED:
        spec = resolve(name)
        p, s = run_workload(spec, Mode.PARTIAL), run_workload(spec, Mode.SEQUENTIAL)
        model = measure(s.rounds)
        lower, upper = l_new_bounds(model)
        exact = s.total_latency_us == l_old(model) == upper
        if p.status == "aborted":
            # early abort stops decoding, so partial latency drops below the full-decode floor
            if not (exact and p.total_latency_us <= s.total_latency_us and p.total_latency_us < lower):
                bad.append(name)
            notes.append(f"{name} aborted, lower bound not applicable: L_p={p.total_latency_us} < floor "
                         f"{lower:.0f}, upper half and l_old exactness hold")
            continue
        if not (exact and lower <= p.total_latency_us <= s.total_latency_us):
            bad.append(name)
    verdict(4, not bad, f"full sandwich on {len(BUNDLED) - len(notes)} completing workloads, "
                        f"violations: {bad or 'none'}; " + "; ".join(notes))


def test_criterion_5_sweep_trend(verdict):
    t0 = time.perf_counter()
    rows = sweep(DEFAULT_RATIOS)
    elapsed = time.perf_counter() - t0
    m = {row.r: row.measured for row in rows}
    f = {row.r: row.theory for row in rows}
    peak = m[1] >= f[1] - 0.15 and m[1] <= f[1]
    tails = m[0.01] <= 0.05 and m[100] <= 0.05
    below = all(row.measured <= row.theory + 0.01 for row in rows)
    seq = [m[r] for r in sorted(m)]
    top = seq.index(max(seq))
    unimodal = all(a <= b for a, b in zip(seq[:top], seq[1:top + 1])) and \
        all(a >= b for a, b in zip(seq[top:], seq[top + 1:]))
    table = " ".join(f"{r:g}:{m[r]:.3f}" for r in sorted(m))
    verdict(5, peak and tails and below and unimodal and elapsed < 30, f"{table}; {elapsed:.1f} s")


def test_criterion_6_calibrated_improvements(verdict):
    bands = {"CodeGen": (0.20, 0.35), "Search": (0.25, 0.45), "Planning": (0.30, 0.48),
             "Database": (None, 0.02), "Calculator": (None, 0.02)}
    stats = summarize(run_benchmark(list(bands)))
    got = {name: improvement_of(stats, name) for name in bands}
    ok = all((lo is None or got[n] >= lo) and got[n] <= hi for n, (lo, hi) in bands.items())
    verdict(6, ok, ", ".join(f"{n} {v:.1%}" for n, v in got.items()))


def test_criterion_7_early_abort(verdict):
    spec = resolve("Validation")
    p, s = run_workload(spec, Mode.PARTIAL), run_workload(spec, Mode.SEQUENTIAL)
    full = spec.trace().rounds[0].generation_us
    frac = p.time_to_abort_us / full
    signal = next(e for e in p.timeline if e.kind == "AbortSignal")
    late_tokens = sum(1 for e in p.timeline if e.kind == "TokenDecoded" and e.key > signal.key)
    speedup = detection_speedup(p, s)
    ok = frac <= 0.22 and speedup >= 3.5 and late_tokens == 0 and p.response_text == "ABORTED: missing state code"
    verdict(7, ok, f"abort at {frac:.1%} of full decode, detection speedup {speedup:.1%}, "
                   f"{late_tokens} tokens after abort")


def test_criterion_8_codegen_timeline(verdict):
    res = run_workload(resolve("CodeGen"), Mode.PARTIAL)
    eos = next(e for e in res.timeline if e.kind == "RoundEnd" and e.round == 0)
    executed = [e for e in res.timeline if e.kind == "PieceExecuted" and e.job.startswith("interp")]
    before = sorted(e.piece for e in executed if e.key < eos.key)
    after = [e.piece for e in executed if e.key > eos.key]
    verdict(8, before == list(range(1, 13)) and len(after) == 1,
            f"lines {before[0]}-{before[-1]} before EOS, after EOS: {after}")


class _Stall(Plugin):
    def on_data(self, piece):
        time.sleep(0.1)
        return ACCEPTED

    def on_finish(self):
        return Observation("done")


def test_criterion_9_overhead(verdict):
    rep = overhead_report("CodeGen")
    reg = builtin_registry()
    reg.register(PluginDescriptor("stall", Binding(GrammarId.FENCE, "stall"), Granularity.LINE), _Stall)
    worst = 0.0
    with WorkerRuntime(reg, RealClock()) as rt:
        job = rt.spawn("stall")
        rt.send_data(job, "first")
        time.sleep(0.01)
        for i in range(10):
            t0 = time.perf_counter()
            rt.send_data(job, f"p{i}")
            worst = max(worst, time.perf_counter() - t0)
        rt.cancel(job)
    verdict(9, rep.fraction < 0.05 and worst < 0.001,
            f"overhead {rep.fraction:.2%} of wall, worst send_data {worst * 1e6:.0f} us")


class _Crash(Plugin):
    def on_data(self, piece):
        os._exit(4)

    def on_finish(self):
        return Observation("never")


class _Hang(Plugin):
    def on_data(self, piece):
        self.ctx.clock.sleep_us(10**12)
        return ACCEPTED

    def on_finish(self):
        return Observation("never")


def _serve(rounds, grammar, registry=None, clock=None, **kw):
    clock = clock or VirtualClock()
    sched = Scheduler(registry or builtin_registry(), TraceDecoder(build_trace(rounds), clock), clock, grammar, **kw)
    return sched.serve(Request("p"))


def _with(name, cls):
    reg = builtin_registry()
    reg.register(PluginDescriptor(name, Binding(GrammarId.FENCE, name), Granularity.LINE), cls)
    return reg


def test_criterion_10_robustness(verdict):
    cases = {
        "unknown tool": (lambda: _serve([('@call frob {"a": 1}\n', 100, 0)], "call"),
                         lambda r: any(w.startswith("UnknownTool") for w in r.warnings) and r.status == "ok"),
        "malformed JSON": (lambda: _serve([('@call calculator {"expression" 1}\n', 100, 0), ("ok\n", 100, 0)], "call"),
                           lambda r: r.observations[0][1].error_detail.startswith("MalformedToolSyntax")),
        "tool crash": (lambda: _serve([("```crash\nx\n```\n", 100, 0), ("ok\n", 100, 0)], "fence",
                                      _with("crash", _Crash), RealClock(), backend="process"),
                       lambda r: "exited with code 4" in r.observations[0][1].error_detail),
        "drain timeout": (lambda: _serve([("```hang\nx\n```\n", 100, 0), ("ok\n", 100, 0)], "fence",
                                         _with("hang", _Hang), drain_timeout_us=DEFAULT_DRAIN_TIMEOUT_US),
                          lambda r: r.status == "failed" and r.error.startswith("DrainTimeout")),
        "trace exhaustion": (lambda: _serve([('@call calculator {"expression": "1"}\n', 100, 0)], "call"),
                             lambda r: r.status == "failed" and r.error.startswith("TraceExhausted")),
    }
    outcome = []
    ok = True
    for name, (run, check) in cases.items():
        t0 = time.perf_counter()
        res = run()
        elapsed = time.perf_counter() - t0
        good = check(res) and elapsed < 35
        ok &= good
        outcome.append(f"{name} {'ok' if good else 'BAD'} {elapsed:.2f}s")
    verdict(10, ok, ", ".join(outcome))
