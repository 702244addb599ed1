"""Tool execution runtime: one isolated worker per tool job.

The scheduler talks to workers through a duplex message channel and never
waits on them while decoding: ``spawn``, ``send_data`` and ``poll`` only
enqueue or drain messages. Two implementations share the job bookkeeping:

:class:`SimRuntime`
    Discrete-event workers on a :class:`~partialexec.clock.VirtualClock`.
    Each worker keeps a private timeline; a message is processed at
    ``max(arrival, worker busy-until)`` and its reply becomes visible on the
    shared clock only once that clock reaches the reply's completion time.
:class:`WorkerRuntime`
    Real concurrency on the wall clock, with thread workers (default) or
    forked processes, each connected by a pair of FIFO channels.
"""

from __future__ import annotations

import collections
import copy
import enum
import itertools
import logging
import multiprocessing
import queue
import threading
import traceback
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from .clock import Clock, LocalClock, VirtualClock
from .plugins import (JobContext, Observation, PartialResult, PluginFactory, Registry, Status,
                      ToolError)

log = logging.getLogger(__name__)

DEFAULT_DRAIN_TIMEOUT_US = 30_000_000
POLL_QUANTUM_US = 1_000


class JobState(str, enum.Enum):
    SPAWNING = "Spawning"
    RUNNING = "Running"
    DONE = "Done"
    FAILED = "Failed"
    ABORTED = "Aborted"


TERMINAL = frozenset({JobState.DONE, JobState.FAILED, JobState.ABORTED})


@dataclass(frozen=True)
class ChannelMessage:
    """One message on a job channel.

    To the tool: ``start``, ``data``, ``finish``, ``cancel``.
    From the tool: ``started``, ``result``, ``observation``, ``failed``,
    ``heartbeat``. ``t_start``/``t_end`` bracket the work that produced a
    reply, on the worker's clock.
    """

    kind: str
    seq: int = 0
    payload: Any = None
    t_start: int = 0
    t_end: int = 0


@dataclass
class ToolJob:
    id: str
    plugin: str
    state: JobState = JobState.SPAWNING
    enqueued_pieces: int = 0
    completed_pieces: int = 0
    spawn_us: int = 0
    first_data_us: int | None = None
    finish_us: int | None = None
    work_us: int = 0
    observation: Observation | None = None
    abort_reason: str | None = None
    aborted_by_tool: bool = False
    finish_sent: bool = False
    results: list[PartialResult] = field(default_factory=list)
    executed: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def terminal(self) -> bool:
        return self.state in TERMINAL

    @property
    def duration_us(self) -> int | None:
        """Activation to terminal state."""
        if self.finish_us is None:
            return None
        return self.finish_us - self.spawn_us

    def final_observation(self) -> Observation:
        if self.observation is not None:
            return self.observation
        if self.state is JobState.ABORTED:
            return Observation.failure(f"aborted: {self.abort_reason}")
        return Observation.failure(f"job {self.id} is {self.state.value}")


class WorkerCore:
    """Drives one plugin instance from channel messages. Used by every backend."""

    def __init__(self, factory: PluginFactory, ctx: JobContext):
        self.factory = factory
        self.ctx = ctx
        self.plugin = None
        self.done = False

    def handle(self, msg: ChannelMessage) -> list[ChannelMessage]:
        if self.done:
            return []
        clock = self.ctx.clock
        t0 = clock.now_us()
        try:
            if msg.kind == "start":
                startup = self.ctx.settings.get("startup_us", 0)
                if startup:
                    clock.sleep_us(startup)
                self.plugin = self.factory()
                self.plugin.on_start(self.ctx)
                return [ChannelMessage("started", t_start=t0, t_end=clock.now_us())]
            if msg.kind == "data":
                result = self.plugin.on_data(msg.payload)
                if result.status is Status.ABORT:
                    self.done = True
                return [ChannelMessage("result", msg.seq, result, t0, clock.now_us())]
            if msg.kind == "finish":
                obs = self.plugin.on_finish()
                self.done = True
                return [ChannelMessage("observation", payload=obs, t_start=t0, t_end=clock.now_us())]
            if msg.kind == "cancel":
                self.done = True
                return []
            raise ValueError(f"unexpected message {msg.kind!r}")
        except Exception as exc:  # tool crash: reported, never propagated
            self.done = True
            kind = "StartupFailure" if msg.kind == "start" else "ToolRuntimeError"
            if isinstance(exc, ToolError):
                detail = f"{kind}: {exc}"
            else:
                detail = f"{kind}: {type(exc).__name__}: {exc}"
                log.debug("tool crashed\n%s", traceback.format_exc())
            return [ChannelMessage("failed", msg.seq, Observation.failure(detail), t0, clock.now_us())]


Listener = Callable[[str, int, ToolJob, int | None, str], None]


class ToolRuntime:
    """Job bookkeeping shared by both runtimes.

    ``listener(kind, t_us, job, piece_seq, detail)`` receives
    ``PieceExecuted`` and ``ToolDone`` notifications.
    """

    def __init__(self, registry: Registry, clock: Clock, tool_settings: dict[str, dict] | None = None,
                 listener: Listener | None = None, drain_timeout_us: int = DEFAULT_DRAIN_TIMEOUT_US):
        self.registry = registry
        self.clock = clock
        self.tool_settings = tool_settings or {}
        self.listener = listener
        self.drain_timeout_us = drain_timeout_us
        self._jobs: dict[str, ToolJob] = {}
        self._ids = itertools.count()
        self.warnings: list[str] = []

    # -- public contract
    def spawn(self, plugin_name: str, settings: dict | None = None) -> ToolJob:
        factory = self.registry.factory(plugin_name)
        job = ToolJob(id=f"{plugin_name}#{next(self._ids)}", plugin=plugin_name, spawn_us=self.clock.now_us())
        merged = dict(self.tool_settings.get(plugin_name, {}))
        merged.update(settings or {})
        self._jobs[job.id] = job
        self._launch(job, factory, merged)
        return job

    def send_data(self, job: ToolJob, piece: Any) -> None:
        job = self._jobs[job.id]
        if job.terminal or job.finish_sent:
            self._warn(f"piece for {job.id} dropped: job is {job.state.value}")
            return
        job.enqueued_pieces += 1
        self._send(job, ChannelMessage("data", job.enqueued_pieces, piece))

    def finish(self, job: ToolJob) -> None:
        """Tell the tool its input is complete; the observation follows."""
        job = self._jobs[job.id]
        if job.terminal or job.finish_sent:
            return
        job.finish_sent = True
        self._send(job, ChannelMessage("finish"))

    def poll(self, job: ToolJob) -> ToolJob:
        job = self._jobs[job.id]
        if not job.terminal:
            for msg in self._receive(job):
                self._apply(job, msg)
                if job.terminal:
                    break
        return copy.copy(job)

    def cancel(self, job: ToolJob, reason: str = "cancelled") -> None:
        job = self._jobs[job.id]
        if job.terminal:
            return
        job.state = JobState.ABORTED
        job.abort_reason = reason
        job.finish_us = self.clock.now_us()
        self._stop(job)
        self._notify("ToolDone", job.finish_us, job, None, f"aborted: {reason}")

    def drain(self, jobs: Iterable[ToolJob]) -> list[Observation]:
        """Block until every job is terminal; observations in the given order."""
        jobs = [self._jobs[j.id] for j in jobs]
        start = self.clock.now_us()
        while True:
            for job in jobs:
                self.poll(job)
            pending = [j for j in jobs if not j.terminal]
            if not pending:
                break
            if not self.wait(pending, start + self.drain_timeout_us):
                for job in pending:
                    self.cancel(job, "drain timeout")
                    job.observation = Observation.failure(
                        f"DrainTimeout: no result within {self.drain_timeout_us / 1e6:g} s")
                break
        return [j.final_observation() for j in jobs]

    def job(self, job_id: str) -> ToolJob:
        return self._jobs[job_id]

    def jobs(self) -> list[ToolJob]:
        return list(self._jobs.values())

    def close(self) -> None:
        for job in self._jobs.values():
            self._stop(job)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- backend hooks
    def _launch(self, job: ToolJob, factory: PluginFactory, settings: dict) -> None:
        raise NotImplementedError

    def _send(self, job: ToolJob, msg: ChannelMessage) -> None:
        raise NotImplementedError

    def _receive(self, job: ToolJob) -> list[ChannelMessage]:
        raise NotImplementedError

    def _stop(self, job: ToolJob) -> None:
        raise NotImplementedError

    def wait(self, pending: list[ToolJob], deadline_us: int) -> bool:
        """Let time pass before the next drain poll; False once the deadline is hit."""
        raise NotImplementedError

    # -- shared bookkeeping
    def _warn(self, text: str) -> None:
        log.warning(text)
        self.warnings.append(text)

    def _notify(self, kind, t, job, seq, detail=""):
        if self.listener is not None:
            self.listener(kind, t, job, seq, detail)

    def _apply(self, job: ToolJob, msg: ChannelMessage) -> None:
        job.work_us += msg.t_end - msg.t_start
        if msg.kind == "started":
            job.state = JobState.RUNNING
        elif msg.kind == "result":
            result: PartialResult = msg.payload
            job.state = JobState.RUNNING
            job.completed_pieces += 1
            job.results.append(result)
            job.executed.append((msg.seq, msg.t_start, msg.t_end))
            if job.first_data_us is None:
                job.first_data_us = msg.t_start
            self._notify("PieceExecuted", msg.t_end, job, msg.seq, f"{result.status.value} start={msg.t_start}")
            if result.status is Status.ABORT:
                job.state = JobState.ABORTED
                job.aborted_by_tool = True
                job.abort_reason = result.abort_reason
                job.finish_us = msg.t_end
                self._stop(job)
                self._notify("ToolDone", msg.t_end, job, None, f"abort: {result.abort_reason}")
        elif msg.kind in ("observation", "failed"):
            job.observation = msg.payload
            job.state = JobState.DONE if msg.kind == "observation" else JobState.FAILED
            job.finish_us = msg.t_end
            self._notify("ToolDone", msg.t_end, job, None, job.state.value)


class SimRuntime(ToolRuntime):
    """Discrete-event workers on a shared virtual clock."""

    def __init__(self, registry: Registry, clock: VirtualClock, **kw):
        if not clock.virtual:
            raise ValueError("SimRuntime needs a virtual clock")
        super().__init__(registry, clock, **kw)
        self._workers: dict[str, tuple[WorkerCore, LocalClock, collections.deque, collections.deque]] = {}

    def _launch(self, job, factory, settings):
        local = LocalClock(self.clock.now_us())
        core = WorkerCore(factory, JobContext(job.id, settings, local))
        self._workers[job.id] = (core, local, collections.deque(), collections.deque())
        self._send(job, ChannelMessage("start"))

    def _send(self, job, msg):
        self._workers[job.id][2].append((self.clock.now_us(), msg))

    def _receive(self, job):
        core, local, inbox, outbox = self._workers[job.id]
        now = self.clock.now_us()
        while inbox and not core.done:
            arrival, msg = inbox[0]
            if max(arrival, local.cursor) > now:
                break
            inbox.popleft()
            local.catch_up(arrival)
            outbox.extend(core.handle(msg))
        ready = []
        while outbox and outbox[0].t_end <= now:
            ready.append(outbox.popleft())
        return ready

    def _stop(self, job):
        core, _, inbox, outbox = self._workers[job.id]
        core.done = True
        inbox.clear()
        outbox.clear()

    def next_event_us(self, job: ToolJob) -> int | None:
        core, local, inbox, outbox = self._workers[job.id]
        if outbox:
            return outbox[0].t_end
        if inbox and not core.done:
            return max(inbox[0][0], local.cursor)
        return None

    def wait(self, pending, deadline_us):
        times = [t for t in (self.next_event_us(j) for j in pending) if t is not None]
        nxt = min(times) if times else None
        if nxt is None or nxt > deadline_us:
            self.clock.advance_to(deadline_us)
            return False
        self.clock.advance_to(nxt)
        return True


class _QueueChannel:
    """One end of a duplex channel built from two FIFO queues."""

    def __init__(self, inbox: queue.SimpleQueue, outbox: queue.SimpleQueue):
        self._in = inbox
        self._out = outbox

    def send(self, msg) -> None:
        self._out.put(msg)

    def recv(self):
        return self._in.get()

    def poll(self) -> bool:
        return not self._in.empty()


def _worker_main(factory: PluginFactory, ctx: JobContext, channel) -> None:
    core = WorkerCore(factory, ctx)
    while not core.done:
        try:
            msg = channel.recv()
        except (EOFError, OSError):
            return
        for reply in core.handle(msg):
            channel.send(reply)


class WorkerRuntime(ToolRuntime):
    """Wall-clock workers: ``backend="thread"`` (default) or ``"process"``.

    Process workers are forked and exchange messages over a duplex pipe, so
    a tool holding the interpreter lock cannot stall decoding.
    """

    def __init__(self, registry: Registry, clock: Clock, backend: str = "thread",
                 poll_quantum_us: int = POLL_QUANTUM_US, **kw):
        if clock.virtual:
            raise ValueError("WorkerRuntime needs a real clock; use SimRuntime for virtual time")
        if backend not in ("thread", "process"):
            raise ValueError(f"unknown backend {backend!r}")
        super().__init__(registry, clock, **kw)
        self.backend = backend
        self.poll_quantum_us = poll_quantum_us
        self._channels: dict[str, Any] = {}
        self._handles: dict[str, Any] = {}
        self._stopped: set[str] = set()

    def _launch(self, job, factory, settings):
        ctx = JobContext(job.id, settings, self.clock)
        if self.backend == "thread":
            to_tool, from_tool = queue.SimpleQueue(), queue.SimpleQueue()
            parent = _QueueChannel(from_tool, to_tool)
            child = _QueueChannel(to_tool, from_tool)
            handle = threading.Thread(target=_worker_main, args=(factory, ctx, child),
                                      name=f"tool-{job.id}", daemon=True)
        else:
            mp = multiprocessing.get_context("fork")
            parent, child = mp.Pipe(duplex=True)
            handle = mp.Process(target=_worker_main, args=(factory, ctx, child),
                                name=f"tool-{job.id}", daemon=True)
        self._channels[job.id] = parent
        self._handles[job.id] = handle
        parent.send(ChannelMessage("start"))
        handle.start()

    def _send(self, job, msg):
        try:
            self._channels[job.id].send(msg)
        except (OSError, ValueError):
            self._warn(f"channel to {job.id} is closed")

    def _receive(self, job):
        channel = self._channels[job.id]
        msgs = []
        try:
            while channel.poll():
                msgs.append(channel.recv())
        except (EOFError, OSError):
            pass
        if not msgs and self.backend == "process" and not self._handles[job.id].is_alive():
            # crashed without reporting
            now = self.clock.now_us()
            msgs.append(ChannelMessage("failed", payload=Observation.failure(
                f"ToolRuntimeError: worker exited with code {self._handles[job.id].exitcode}"),
                t_start=now, t_end=now))
        return msgs

    def _stop(self, job):
        if job.id not in self._stopped:
            self._stopped.add(job.id)
            try:
                self._channels[job.id].send(ChannelMessage("cancel"))
            except (OSError, ValueError):
                pass  # worker already gone

    def close(self):
        super().close()
        for handle in self._handles.values():
            handle.join(0.05)
            if self.backend == "process" and handle.is_alive():
                handle.terminate()

    def wait(self, pending, deadline_us):
        if self.clock.now_us() >= deadline_us:
            return False
        self.clock.sleep_us(self.poll_quantum_us)
        return True


def make_runtime(registry: Registry, clock: Clock, **kw) -> ToolRuntime:
    if clock.virtual:
        kw.pop("backend", None)
        return SimRuntime(registry, clock, **kw)
    return WorkerRuntime(registry, clock, **kw)
