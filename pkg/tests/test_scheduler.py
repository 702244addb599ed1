from __future__ import annotations

import os
import time

import pytest

from partialexec.clock import RealClock, VirtualClock
from partialexec.decoder import TraceDecoder
from partialexec.latency import l_new_bounds, l_old
from partialexec.parser import GrammarId
from partialexec.plugins import ACCEPTED, Binding, Granularity, Observation, Plugin, PluginDescriptor
from partialexec.scheduler import Mode, Request, Scheduler, assemble_prompt, measure
from partialexec.tools import builtin_registry
from partialexec.tracegen import build_trace
from partialexec.workloads import BUNDLED, resolve, run_workload


def serve(rounds, grammar="call", mode=Mode.PARTIAL, registry=None, clock=None, **kw):
    clock = clock or VirtualClock()
    dec = TraceDecoder(build_trace(rounds), clock)
    sched = Scheduler(registry or builtin_registry(), dec, clock, grammar, **kw)
    return sched.serve(Request("prompt", mode, max_rounds=kw.pop("max_rounds", 8))), dec


def kinds(result, kind):
    return [e for e in result.timeline if e.kind == kind]


# -- prompt assembly


def test_assemble_prompt_no_observations():
    assert assemble_prompt("P", "plan", []) == "Pplan"


def test_assemble_prompt_single_observation():
    out = assemble_prompt("P", "plan", [("calculator", Observation("140200"))])
    assert out == "Pplan\n[OBSERVATION calculator]\n140200\n"


def test_assemble_prompt_keeps_activation_order_and_failures():
    out = assemble_prompt("", "", [("b", Observation("2")), ("a", Observation.failure("boom"))])
    assert out == "\n[OBSERVATION b]\n2\n\n[OBSERVATION a]\nERROR boom\n"


# -- basic lifecycle


def test_round_without_tools_is_final():
    res, _ = serve([("hello there\n", 1000, 500)])
    assert res.status == "ok"
    assert res.response_text == "hello there\n"
    assert len(res.rounds) == 1
    assert res.total_latency_us == 500 + 3 * 1000


def test_next_prompt_carries_observations():
    res, dec = serve([('@call calculator {"expression": "200*701"}\n', 1000, 0), ("140200\n", 1000, 0)])
    assert res.response_text == "140200\n"
    nxt = assemble_prompt("prompt", res.rounds[0].generated_text, res.rounds[0].observations)
    assert "[OBSERVATION calculator]\n140200\n" in nxt
    from partialexec.decoder import prompt_digest
    assert dec.audit[1] == prompt_digest(nxt)


@pytest.mark.parametrize("mode", list(Mode))
def test_no_tool_trace_gives_identical_timelines(mode):
    a, _ = serve([("just an answer\n", 700, 100)], mode=Mode.PARTIAL)
    b, _ = serve([("just an answer\n", 700, 100)], mode=mode)
    assert [(e.kind, e.round, e.piece) for e in a.timeline] == [(e.kind, e.round, e.piece) for e in b.timeline]


def test_request_validation():
    with pytest.raises(ValueError):
        Request("p", max_rounds=0)
    assert Request("p", "sequential").mode is Mode.SEQUENTIAL


# -- bundled workloads


@pytest.mark.parametrize("name", list(BUNDLED))
def test_modes_agree_on_output(name):
    spec = resolve(name)
    p = run_workload(spec, Mode.PARTIAL)
    s = run_workload(spec, Mode.SEQUENTIAL)
    assert p.response_text == s.response_text
    assert [(n, o.text, o.success) for n, o in p.observations] == [(n, o.text, o.success) for n, o in s.observations]


@pytest.mark.parametrize("name", [n for n in BUNDLED if n != "Validation"])
def test_latency_sandwich(name):
    spec = resolve(name)
    p = run_workload(spec, Mode.PARTIAL)
    s = run_workload(spec, Mode.SEQUENTIAL)
    model = measure(s.rounds)
    lower, upper = l_new_bounds(model)
    assert s.total_latency_us == l_old(model) == upper
    assert lower <= p.total_latency_us <= s.total_latency_us


@pytest.mark.parametrize("name", [n for n in BUNDLED if n != "Validation"])
def test_per_round_bounds_hold_in_partial_mode(name):
    p = run_workload(resolve(name), Mode.PARTIAL)
    for rec in p.rounds[:-1]:
        t = sum(rec.work_times)
        assert max(rec.g_time, t) <= rec.wall_us <= rec.g_time + t + sum(rec.t_times)


def test_sequential_post_eos_wait_is_sum_of_tool_durations():
    s = run_workload(resolve("Search"), Mode.SEQUENTIAL)
    rec = s.rounds[0]
    assert rec.post_eos_wait == sum(rec.t_times)
    assert rec.t_times == [420_000] * 3


def test_codegen_only_last_line_runs_after_eos():
    res = run_workload(resolve("CodeGen"), Mode.PARTIAL)
    eos = next(e for e in res.timeline if e.kind == "RoundEnd" and e.round == 0)
    executed = [e for e in res.timeline if e.kind == "PieceExecuted" and e.job and e.job.startswith("interp")]
    assert len(executed) == 13
    before = [e.piece for e in executed if e.key < eos.key]
    after = [e.piece for e in executed if e.key > eos.key]
    assert before == list(range(1, 13))
    assert after == [13]


def test_validation_aborts_mid_decode():
    spec = resolve("Validation")
    res = run_workload(spec, Mode.PARTIAL)
    assert res.status == "aborted"
    assert res.response_text == "ABORTED: missing state code"
    [sig] = kinds(res, "AbortSignal")
    after = [e for e in kinds(res, "TokenDecoded") if e.key > sig.key]
    assert after == []
    assert len(res.rounds) == 1 and res.rounds[0].aborted
    full = spec.trace().rounds[0].generation_us
    assert res.time_to_abort_us < full
    seq = run_workload(spec, Mode.SEQUENTIAL)
    assert seq.response_text == res.response_text
    assert seq.time_to_abort_us >= full


def test_piece_dispatch_order_is_monotone():
    res = run_workload(resolve("CodeGen"), Mode.PARTIAL)
    by_job: dict[str, list[int]] = {}
    for e in kinds(res, "PieceDispatched"):
        by_job.setdefault(e.job, []).append(e.piece)
    for pieces in by_job.values():
        assert pieces == sorted(pieces) == list(range(1, len(pieces) + 1))


def test_planning_dataflow():
    res = run_workload(resolve("Planning"), Mode.PARTIAL)
    texts = [o.text for _, o in res.observations]
    assert texts == ["3410", "3100", "1.1", "ratio is 1.1"]
    # the two searches overlap, the calculator waits for both
    starts = {e.job: e.t for e in kinds(res, "ToolStart")}
    done = {e.job: e.t for e in kinds(res, "ToolDone")}
    s1, s2, calc = sorted(starts, key=starts.get)[:3]
    assert starts[s2] < done[s1]
    assert starts[calc] >= max(done[s1], done[s2])


def test_measure_single_round_without_tools():
    res, _ = serve([("fine\n", 10, 0)])
    m = measure(res.rounds)
    assert m.n == 0 and m.g == (20,)  # "fine", "\n"


def test_measure_search_uses_server_delays():
    s = run_workload(resolve("Search"), Mode.SEQUENTIAL)
    m = measure(s.rounds)
    assert m.n == 1 and m.t == (3 * 420_000,)


def test_virtual_runs_are_deterministic():
    a = run_workload(resolve("Planning"), Mode.PARTIAL)
    b = run_workload(resolve("Planning"), Mode.PARTIAL)
    strip = lambda r: [(e.t, e.kind, e.round, e.job, e.piece, e.detail) for e in r.timeline]  # noqa: E731
    assert strip(a) == strip(b)


# -- robustness


class Crash(Plugin):
    def on_data(self, piece):
        os._exit(5)

    def on_finish(self):
        return Observation("never")


class Hang(Plugin):
    def on_data(self, piece):
        self.ctx.clock.sleep_us(10**12)
        return ACCEPTED

    def on_finish(self):
        return Observation("never")


def registry_with(name, cls):
    reg = builtin_registry()
    reg.register(PluginDescriptor(name, Binding(GrammarId.FENCE, name), Granularity.LINE), cls)
    return reg


def test_unknown_tool_is_plain_text():
    res, _ = serve([('@call frob {"a": 1}\n', 100, 0)])
    assert res.status == "ok"
    assert res.response_text == '@call frob {"a": 1}\n'
    assert any(w.startswith("UnknownTool") for w in res.warnings)


def test_malformed_call_gives_failed_observation():
    res, _ = serve([('@call calculator {"expression" 1}\n', 100, 0), ("sorry\n", 100, 0)])
    assert res.status == "ok" and res.response_text == "sorry\n"
    [(name, obs)] = res.observations
    assert name == "calculator" and not obs.success
    assert obs.error_detail.startswith("MalformedToolSyntax")


def test_tool_crash_is_reported_and_serving_continues():
    t0 = time.perf_counter()
    res, _ = serve([("```crash\nboom\n```\n", 1000, 0), ("recovered\n", 1000, 0)], grammar="fence",
                   registry=registry_with("crash", Crash), clock=RealClock(), backend="process")
    assert time.perf_counter() - t0 < 10
    assert res.response_text == "recovered\n"
    [(_, obs)] = res.observations
    assert not obs.success and "exited with code 5" in obs.error_detail


@pytest.mark.parametrize("mode", list(Mode))
def test_drain_timeout_fails_the_request(mode):
    res, _ = serve([("```hang\nx\n```\n", 1000, 0), ("never\n", 1000, 0)], grammar="fence", mode=mode,
                   registry=registry_with("hang", Hang), drain_timeout_us=2_000_000)
    assert res.status == "failed" and res.error.startswith("DrainTimeout")
    assert res.rounds[0].post_eos_wait <= 2_000_000


def test_trace_exhaustion_fails_the_request():
    res, _ = serve([('@call calculator {"expression": "1+1"}\n', 100, 0)])
    assert res.status == "failed" and res.error.startswith("TraceExhausted")


def test_max_rounds_exceeded():
    call = ('@call calculator {"expression": "1+1"}\n', 100, 0)
    clock = VirtualClock()
    sched = Scheduler(builtin_registry(), TraceDecoder(build_trace([call] * 3), clock), clock, "call")
    res = sched.serve(Request("p", max_rounds=2))
    assert res.status == "failed" and res.error.startswith("MaxRoundsExceeded")


# -- real clock


def test_real_clock_generation_time_tracks_trace():
    spec = resolve("Calculator")
    res = run_workload(spec, Mode.PARTIAL, clock=RealClock())
    assert res.response_text == "200 times 701 is 140200.\n"
    for rec, rnd in zip(res.rounds, spec.trace().rounds):
        expected = rnd.generation_us
        assert abs(rec.g_time - expected) <= 0.1 * expected


def test_measure_aborted_request_has_zero_final_generation():
    s = run_workload(resolve("Validation"), Mode.SEQUENTIAL)
    m = measure(s.rounds)
    assert m.n == 1 and m.g[-1] == 0
    assert l_old(m) == s.total_latency_us
