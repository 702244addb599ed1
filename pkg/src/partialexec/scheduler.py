"""Request lifecycle: decode, parse, dispatch to tools, poll, and chain rounds.

In ``partial`` mode every completed data piece is sent to its tool the moment
the parser emits it, and tool status is polled once per decoded token. In
``sequential`` mode tool work starts only after the round's EOS and tools of
a round run one after another. A round that activates no tool is final.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from typing import Any, Sequence

from .clock import Clock
from .latency import LatencyModel, ModelIllFormed
from .decoder import TraceDecoder, TraceExhausted, StreamBroken
from .parser import EventKind, Grammar, GrammarId, MALFORMED_TOOL_SYNTAX, ParserEvent, StreamParser
from .plugins import (Binding, Field, Granularity, Observation, PluginDescriptor, Registry, StartCondition,
                      ToolError, UnknownTool)
from .runtime import DEFAULT_DRAIN_TIMEOUT_US, ToolJob, ToolRuntime, make_runtime
from .timeline import Timeline, TimelineEvent
from .tools.plan import Stage, parse_stage, substitute_refs

log = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    PARTIAL = "partial"
    SEQUENTIAL = "sequential"


@dataclass
class Request:
    prompt: str
    mode: Mode = Mode.PARTIAL
    grammar: Grammar | None = None
    max_rounds: int = 8
    id: str = "req-0"

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")


@dataclass
class ToolRecord:
    tool: str
    job_id: str | None
    state: str
    duration_us: int
    work_us: int
    observation: Observation


@dataclass
class RoundRecord:
    index: int
    generated_text: str
    start_us: int
    eos_us: int
    end_us: int
    tokens_decoded: int
    tools: list[ToolRecord] = field(default_factory=list)
    aborted: bool = False
    mode: Mode = Mode.PARTIAL

    @property
    def g_time(self) -> int:
        return self.eos_us - self.start_us

    @property
    def post_eos_wait(self) -> int:
        return self.end_us - self.eos_us

    @property
    def wall_us(self) -> int:
        return self.end_us - self.start_us

    @property
    def t_times(self) -> list[int]:
        return [t.duration_us for t in self.tools]

    @property
    def work_times(self) -> list[int]:
        return [t.work_us for t in self.tools]

    @property
    def observations(self) -> list[tuple[str, Observation]]:
        return [(t.tool, t.observation) for t in self.tools]


@dataclass
class ServeResult:
    response_text: str
    rounds: list[RoundRecord]
    timeline: list[TimelineEvent]
    mode: Mode
    status: str = "ok"
    error: str | None = None
    abort_reason: str | None = None
    start_us: int = 0
    end_us: int = 0
    abort_us: int | None = None
    warnings: list[str] = field(default_factory=list)
    overhead_us: float = 0.0
    wall_us: float = 0.0

    @property
    def total_latency_us(self) -> int:
        return self.end_us - self.start_us

    @property
    def time_to_abort_us(self) -> int | None:
        return None if self.abort_us is None else self.abort_us - self.start_us

    @property
    def observations(self) -> list[tuple[str, Observation]]:
        return [o for r in self.rounds for o in r.observations]

    def __iter__(self):
        return iter((self.response_text, self.rounds, self.timeline))


class MaxRoundsExceeded(RuntimeError):
    pass


def _observation_body(obs: Observation) -> str:
    if obs.success:
        return obs.text
    return f"ERROR {obs.error_detail}" + (f"\n{obs.text}" if obs.text else "")


def assemble_prompt(prev_prompt: str, plan_text: str,
                    observations: Sequence[tuple[str, Observation]]) -> str:
    """Next round's prompt: previous prompt, the generated plan, then one block per observation."""
    blocks = "".join(f"\n[OBSERVATION {name}]\n{_observation_body(obs)}\n" for name, obs in observations)
    return prev_prompt + plan_text + blocks


@dataclass
class _Activation:
    order: int
    descriptor: PluginDescriptor
    job: ToolJob | None = None
    pieces: list[Any] = field(default_factory=list)
    args: dict = field(default_factory=dict)
    closed: bool = False
    failure: Observation | None = None
    stage: Stage | None = None
    launched: bool = False

    @property
    def name(self) -> str:
        return self.descriptor.name


class _Round:
    def __init__(self, index: int, request: Request, start_us: int):
        self.index = index
        self.request = request
        self.start_us = start_us
        self.acts: list[_Activation] = []
        self.open: _Activation | None = None
        self.skip_region = False
        self.text: list[str] = []
        self.tokens = 0
        self.abort: tuple[int, str, str] | None = None
        self.error: str | None = None


class Scheduler:
    """Serves requests against one decoder and a tool registry.

    ``decoder`` must offer ``start_round(prompt)``, ``next_token()`` (``None``
    at EOS) and ``cancel()``.
    """

    def __init__(self, registry: Registry, decoder, clock: Clock, grammar: Grammar | GrammarId | str,
                 tool_settings: dict[str, dict] | None = None,
                 drain_timeout_us: int = DEFAULT_DRAIN_TIMEOUT_US, backend: str = "thread"):
        self.registry = registry
        self.decoder = decoder
        self.clock = clock
        if not isinstance(grammar, Grammar):
            grammar = registry.grammar(grammar)
        self.grammar = grammar
        self.tool_settings = tool_settings or {}
        self.drain_timeout_us = drain_timeout_us
        self.backend = backend

    # -- instrumentation: parser and dispatch time, for the overhead report
    def _timed(self, fn, *args):
        t0 = time.perf_counter_ns()
        try:
            return fn(*args)
        finally:
            self._overhead_ns += time.perf_counter_ns() - t0

    def serve(self, request: Request) -> ServeResult:
        self._overhead_ns = 0
        wall0 = time.perf_counter_ns()
        self.timeline = Timeline()
        self.runtime: ToolRuntime = make_runtime(
            self.registry, self.clock, tool_settings=self.tool_settings, listener=self._on_runtime_event,
            drain_timeout_us=self.drain_timeout_us, backend=self.backend)
        self.variables: dict[str, str] = {}
        self.failed_vars: set[str] = set()
        self._warnings: list[str] = []
        self._round: _Round | None = None
        result = ServeResult("", [], [], request.mode, start_us=self.clock.now_us())
        prompt = request.prompt
        try:
            for index in range(request.max_rounds):
                rnd = self._serve_round(index, prompt, request)
                record = self._record(rnd)
                result.rounds.append(record)
                if rnd.abort is not None:
                    result.status = "aborted"
                    result.abort_us, _, result.abort_reason = rnd.abort
                    result.response_text = f"ABORTED: {result.abort_reason}"
                    break
                if rnd.error is not None:
                    result.status, result.error = "failed", rnd.error
                    break
                if not rnd.acts:
                    result.response_text = record.generated_text
                    break
                prompt = assemble_prompt(prompt, record.generated_text, record.observations)
            else:
                raise MaxRoundsExceeded(f"no final answer after {request.max_rounds} rounds")
        except (TraceExhausted, StreamBroken, MaxRoundsExceeded) as exc:
            result.status = "failed"
            result.error = f"{type(exc).__name__}: {exc}"
        finally:
            self.runtime.close()
        result.end_us = self.clock.now_us()
        self.timeline.record(result.end_us, "ResponseReady", detail=result.status)
        result.timeline = self.timeline.events()
        result.warnings = list(self.runtime.warnings) + self._warnings
        result.overhead_us = self._overhead_ns / 1000
        result.wall_us = (time.perf_counter_ns() - wall0) / 1000
        return result

    def _warn(self, text: str) -> None:
        log.warning(text)
        self._warnings.append(text)

    def _on_runtime_event(self, kind, t, job, seq, detail):
        rnd = self._round.index if self._round is not None else None
        self.timeline.record(t, kind, rnd, job.id, seq, detail)

    # -- one round
    def _serve_round(self, index: int, prompt: str, request: Request) -> _Round:
        rnd = _Round(index, request, self.clock.now_us())
        self._round = rnd
        partial = request.mode is Mode.PARTIAL
        self.timeline.record(rnd.start_us, "RoundStart", index)
        self.decoder.start_round(prompt)
        parser = StreamParser(request.grammar or self.grammar)
        while True:
            ev = self.decoder.next_token()
            if ev is None:
                break
            rnd.tokens += 1
            text = ev.token.text
            rnd.text.append(text.decode("utf-8", "replace") if isinstance(text, bytes) else text)
            self.timeline.record(ev.emit_time, "TokenDecoded", index, piece=ev.token.index)
            for pe in self._timed(parser.feed, ev.token):
                self._on_event(rnd, pe, partial)
            if partial:
                self._poll(rnd)
                if rnd.abort is not None:
                    break
        eos = self.clock.now_us()
        rnd.eos_us = eos
        if rnd.abort is not None:
            self.decoder.cancel()
            parser.abort()
            self.timeline.record(eos, "RoundEnd", index, detail="aborted")
            rnd.end_us = self.clock.now_us()
            return rnd
        for pe in self._timed(parser.flush):
            self._on_event(rnd, pe, partial)
        self.timeline.record(eos, "RoundEnd", index, detail="eos")
        if partial:
            self._drain_partial(rnd)
        else:
            self._run_sequential(rnd)
        rnd.end_us = self.clock.now_us()
        return rnd

    def _on_event(self, rnd: _Round, pe: ParserEvent, partial: bool) -> None:
        kind = pe.kind
        if kind is EventKind.TOOL_START:
            rnd.open = None
            rnd.skip_region = False
            try:
                if pe.grammar is GrammarId.FENCE:
                    desc = self.registry.descriptor(pe.tool)
                else:
                    desc = self.registry.lookup(Binding(pe.grammar, pe.tool))
            except UnknownTool:
                self._warn(f"UnknownTool: {pe.tool!r}; region treated as plain text")
                rnd.skip_region = True
                return
            act = _Activation(len(rnd.acts), desc)
            rnd.acts.append(act)
            rnd.open = act
            if partial and (pe.grammar is GrammarId.FENCE
                            or desc.start_condition is StartCondition.ON_NAME_PARSED):
                self._spawn(rnd, act)
        elif kind is EventKind.TOOL_DATA:
            if pe.grammar is GrammarId.PLAN:
                self._on_stage(rnd, pe, partial)
            elif rnd.open is not None:
                self._dispatch(rnd, rnd.open, pe.text, partial)
        elif kind is EventKind.FIELD_COMPLETE:
            act = rnd.open
            if act is None:
                return
            if act.descriptor.granularity is Granularity.WHOLE_CALL:
                node = act.args
                for key in pe.path[:-1]:
                    node = node.setdefault(key, {})
                node[pe.path[-1]] = pe.text
            else:
                self._dispatch(rnd, act, Field(pe.path, pe.text), partial)
        elif kind is EventKind.TOOL_END:
            act = rnd.open
            rnd.open = None
            rnd.skip_region = False
            if act is None:
                return
            if act.failure is None and act.descriptor.granularity is Granularity.WHOLE_CALL:
                self._dispatch(rnd, act, act.args, partial)
            act.closed = True
            if partial and act.job is not None and act.failure is None:
                self._timed(self.runtime.finish, act.job)
        elif kind is EventKind.DIAGNOSTIC:
            self._warn(f"{pe.reason}: {pe.text}")
            if pe.reason == MALFORMED_TOOL_SYNTAX and rnd.open is not None:
                act = rnd.open
                act.failure = Observation.failure(f"MalformedToolSyntax: {pe.text}")
                if act.job is not None:
                    self._timed(self.runtime.cancel, act.job, "malformed arguments")

    # -- partial-mode dispatch
    def _spawn(self, rnd: _Round, act: _Activation, settings: dict | None = None) -> None:
        act.job = self._timed(self.runtime.spawn, act.name, settings)
        act.launched = True
        self.timeline.record(act.job.spawn_us, "ToolStart", rnd.index, act.job.id, detail=act.name)

    def _dispatch(self, rnd: _Round, act: _Activation, piece: Any, partial: bool) -> None:
        if act.failure is not None:
            return
        if not partial:
            act.pieces.append(piece)
            return
        if act.job is None:
            self._spawn(rnd, act)
        self._timed(self.runtime.send_data, act.job, piece)
        job = self.runtime.job(act.job.id)
        self.timeline.record(self.clock.now_us(), "PieceDispatched", rnd.index, job.id, job.enqueued_pieces)

    def _on_stage(self, rnd: _Round, pe: ParserEvent, partial: bool) -> None:
        stage = parse_stage(pe.text)
        try:
            desc = self.registry.lookup(Binding(GrammarId.PLAN, stage.tool))
        except UnknownTool:
            self._warn(f"UnknownTool: plan stage tool {stage.tool!r}")
            return
        act = _Activation(len(rnd.acts), desc, stage=stage, closed=True)
        rnd.acts.append(act)
        if partial:
            self._launch_ready_stages(rnd, final=False)

    def _launch_stage(self, rnd: _Round, act: _Activation) -> None:
        """Spawn a stage whose references are resolved."""
        act.launched = True
        try:
            args = substitute_refs(act.stage.args, self.variables)
        except ToolError as exc:
            act.failure = Observation.failure(str(exc))
            return
        settings = {"variables": dict(self.variables)}
        act.job = self._timed(self.runtime.spawn, act.name, settings)
        self.timeline.record(act.job.spawn_us, "ToolStart", rnd.index, act.job.id, detail=act.stage.line)
        self._timed(self.runtime.send_data, act.job, args)
        self.timeline.record(self.clock.now_us(), "PieceDispatched", rnd.index, act.job.id, 1)
        self._timed(self.runtime.finish, act.job)

    def _stage_blocked(self, rnd: _Round, act: _Activation, final: bool) -> bool:
        """True while a stage still waits on a reference; fails it if the reference can never resolve."""
        producers = {a.stage.var for a in rnd.acts if a.stage is not None and a is not act}
        blocked = False
        for k in sorted(act.stage.refs):
            var = f"#E{k}"
            if var in self.variables:
                continue
            if var in self.failed_vars:
                act.failure = Observation.failure(f"dependency {var} failed")
                return False
            if k >= act.stage.index or (final and var not in producers):
                act.failure = Observation.failure(f"undefined reference {var}")
                return False
            blocked = True
        return blocked

    def _launch_ready_stages(self, rnd: _Round, final: bool) -> None:
        for act in rnd.acts:
            if act.stage is None or act.launched or act.failure is not None:
                continue
            if not self._stage_blocked(rnd, act, final):
                if act.failure is None:
                    self._launch_stage(rnd, act)
                else:
                    act.launched = True
                    self.failed_vars.add(act.stage.var)

    def _collect_stage(self, act: _Activation, job: ToolJob) -> None:
        if act.stage is None or act.stage.var in self.variables or act.stage.var in self.failed_vars:
            return
        obs = job.final_observation()
        if obs.success:
            self.variables[act.stage.var] = obs.text
        else:
            self.failed_vars.add(act.stage.var)

    def _poll(self, rnd: _Round) -> None:
        stage_done = False
        for act in rnd.acts:
            if act.job is None:
                continue
            job = self._timed(self.runtime.poll, act.job)
            if not job.terminal:
                continue
            if job.aborted_by_tool and rnd.abort is None:
                self._abort(rnd, job)
                return
            if act.stage is not None:
                self._collect_stage(act, job)
                stage_done = True
        if stage_done:
            self._launch_ready_stages(rnd, final=False)

    def _abort(self, rnd: _Round, job: ToolJob) -> None:
        now = self.clock.now_us()
        rnd.abort = (now, job.id, job.abort_reason)
        self.timeline.record(now, "AbortSignal", rnd.index, job.id, detail=job.abort_reason or "")
        for act in rnd.acts:
            if act.job is not None:
                self.runtime.cancel(act.job, "request aborted")

    def _drain_partial(self, rnd: _Round) -> None:
        deadline = self.clock.now_us() + self.drain_timeout_us
        self._launch_ready_stages(rnd, final=True)
        for act in rnd.acts:
            if act.job is not None and act.failure is None:
                self.runtime.finish(act.job)
        while True:
            self._poll(rnd)
            if rnd.abort is not None:
                return
            self._launch_ready_stages(rnd, final=True)
            pending = [self.runtime.job(a.job.id) for a in rnd.acts if a.job is not None]
            pending = [j for j in pending if not j.terminal]
            if not pending:
                return
            if not self.runtime.wait(pending, deadline):
                self._drain_timeout(rnd, pending)
                return

    def _drain_timeout(self, rnd: _Round, pending: list[ToolJob]) -> None:
        secs = self.drain_timeout_us / 1e6
        for job in pending:
            self.runtime.cancel(job, "drain timeout")
            self.runtime.job(job.id).observation = Observation.failure(
                f"DrainTimeout: no result within {secs:g} s")
        rnd.error = f"DrainTimeout: {', '.join(j.id for j in pending)} still running after {secs:g} s"

    # -- sequential baseline
    def _run_sequential(self, rnd: _Round) -> None:
        for act in rnd.acts:
            if act.failure is not None:
                continue
            if act.stage is not None:
                if self._stage_blocked(rnd, act, final=True):
                    act.failure = Observation.failure("unresolved reference")
                if act.failure is not None:
                    self.failed_vars.add(act.stage.var)
                    continue
                self._launch_stage(rnd, act)
                if act.failure is not None:
                    self.failed_vars.add(act.stage.var)
                    continue
            else:
                self._spawn(rnd, act)
                for piece in act.pieces:
                    self.runtime.send_data(act.job, piece)
                    self.timeline.record(self.clock.now_us(), "PieceDispatched", rnd.index, act.job.id,
                                         self.runtime.job(act.job.id).enqueued_pieces)
                self.runtime.finish(act.job)
            deadline = self.clock.now_us() + self.drain_timeout_us
            while True:
                job = self.runtime.poll(act.job)
                if job.terminal:
                    break
                if not self.runtime.wait([job], deadline):
                    self._drain_timeout(rnd, [job])
                    return
            if job.aborted_by_tool:
                self._abort(rnd, job)
                return
            self._collect_stage(act, job)

    def _record(self, rnd: _Round) -> RoundRecord:
        record = RoundRecord(rnd.index, "".join(rnd.text), rnd.start_us, rnd.eos_us, rnd.end_us, rnd.tokens,
                             aborted=rnd.abort is not None, mode=rnd.request.mode)
        for act in rnd.acts:
            job = self.runtime.job(act.job.id) if act.job is not None else None
            if job is None:
                obs = act.failure or Observation.failure("tool never started")
                record.tools.append(ToolRecord(act.name, None, "Failed", 0, 0, obs))
                continue
            end = job.finish_us if job.finish_us is not None else rnd.end_us
            record.tools.append(ToolRecord(act.name, job.id, job.state.value, end - job.spawn_us, job.work_us,
                                           act.failure or job.final_observation()))
        return record


def measure(records: Sequence[RoundRecord]) -> LatencyModel:
    """Latency model of a served request.

    ``g_i`` is each round's start-to-EOS time. A round's ``t_i`` is the sum of
    its tools' activation-to-terminal durations for sequential records (tools
    there run back to back) and the sum of their intrinsic work for partial
    records (queue wait excluded). The last round is ``g_{n+1}``, except
    when the request was aborted: that round's tools count as ``t_n`` and
    the final generation is zero.
    """
    if not records:
        raise ModelIllFormed("no rounds to measure")
    tool_rounds = records if records[-1].aborted else records[:-1]
    g = [r.g_time for r in records] + ([0] if records[-1].aborted else [])
    t = [sum(r.t_times) if r.mode is Mode.SEQUENTIAL else sum(r.work_times) for r in tool_rounds]
    return LatencyModel(g, t)


def serve(request: Request, registry: Registry, decoder, clock: Clock, **kw) -> ServeResult:
    """Convenience wrapper building a one-off :class:`Scheduler`."""
    grammar = request.grammar or kw.pop("grammar", GrammarId.FENCE)
    return Scheduler(registry, decoder, clock, grammar, **kw).serve(request)
