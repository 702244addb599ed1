"""Plugin contract for tools and the registry binding tools to indicators.

A tool author subclasses :class:`Plugin` and implements three methods:

* ``on_start(ctx)``: called when the indicator is detected; expensive
  setup (connections, loading a schema) may begin here.
* ``on_data(piece)``: called once per completed data piece, in parser
  order. Returns a :class:`PartialResult`.
* ``on_finish()``: called after the region closes; returns the
  :class:`Observation` fed into the next round's prompt.

The plugin instance itself is the per-job handle.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable

from .clock import Clock, RealClock
from .parser import Grammar, GrammarId


class Granularity(str, enum.Enum):
    LINE = "line"
    FIELD = "field"
    STAGE = "stage"
    WHOLE_CALL = "whole_call"


class StartCondition(str, enum.Enum):
    ON_REGION_OPEN = "on_region_open"
    ON_NAME_PARSED = "on_name_parsed"


_COMPATIBLE = {
    Granularity.LINE: GrammarId.FENCE,
    Granularity.FIELD: GrammarId.CALL,
    Granularity.WHOLE_CALL: GrammarId.CALL,
    Granularity.STAGE: GrammarId.PLAN,
}


@dataclass(frozen=True)
class Binding:
    """Which indicator activates a tool: a fence tag, a call name or a plan tool name."""

    grammar: GrammarId
    key: str


@dataclass(frozen=True)
class PluginDescriptor:
    name: str
    binding: Binding
    granularity: Granularity
    start_condition: StartCondition = StartCondition.ON_REGION_OPEN

    def __post_init__(self):
        if not self.name:
            raise ValueError("descriptor needs a name")
        expected = _COMPATIBLE[self.granularity]
        if self.binding.grammar != expected:
            raise ValueError(
                f"{self.granularity.value} granularity needs a {expected.value} binding, "
                f"got {self.binding.grammar.value}")


class Status(str, enum.Enum):
    ACCEPTED = "Accepted"
    NEED_MORE = "NeedMore"
    ABORT = "Abort"


@dataclass(frozen=True)
class PartialResult:
    status: Status
    abort_reason: str | None = None

    def __post_init__(self):
        if (self.status is Status.ABORT) != bool(self.abort_reason):
            raise ValueError("abort_reason is required for Abort and only for Abort")


ACCEPTED = PartialResult(Status.ACCEPTED)
NEED_MORE = PartialResult(Status.NEED_MORE)


def abort(reason: str) -> PartialResult:
    return PartialResult(Status.ABORT, reason)


@dataclass(frozen=True)
class Observation:
    text: str
    success: bool = True
    error_detail: str | None = None

    def __post_init__(self):
        if not self.success and not self.error_detail:
            raise ValueError("a failed observation needs error_detail")

    @classmethod
    def failure(cls, detail: str, text: str = "") -> "Observation":
        return cls(text, False, detail)


@dataclass(frozen=True)
class Field:
    """One completed value of a call's argument object."""

    path: tuple[str, ...]
    value: str


@dataclass
class JobContext:
    """What a worker hands to ``on_start``.

    ``clock`` is the worker's own clock: tools model their execution cost by
    sleeping on it.
    """

    job_id: str = "job-0"
    settings: dict[str, Any] = field(default_factory=dict)
    clock: Clock = field(default_factory=RealClock)


class ToolError(Exception):
    """Raised by a plugin when the tool itself fails (bad input, runtime error)."""


class Plugin:
    """Base class for tool plugins. One instance serves one job."""

    def on_start(self, ctx: JobContext) -> None:
        self.ctx = ctx

    def on_data(self, piece: Any) -> PartialResult:
        raise NotImplementedError

    def on_finish(self) -> Observation:
        raise NotImplementedError


PluginFactory = Callable[[], Plugin]


class DuplicateName(ValueError):
    pass


class UnknownTool(KeyError):
    pass


class Registry:
    """Tool registry. Read-only once serving starts."""

    def __init__(self):
        self._by_name: dict[str, tuple[PluginDescriptor, PluginFactory]] = {}
        self._by_binding: dict[Binding, str] = {}

    def register(self, descriptor: PluginDescriptor, factory: PluginFactory) -> None:
        if descriptor.name in self._by_name:
            raise DuplicateName(descriptor.name)
        if descriptor.binding in self._by_binding:
            raise DuplicateName(f"binding {descriptor.binding} already taken by "
                                f"{self._by_binding[descriptor.binding]!r}")
        self._by_name[descriptor.name] = (descriptor, factory)
        self._by_binding[descriptor.binding] = descriptor.name

    def lookup(self, binding: Binding) -> PluginDescriptor:
        try:
            return self._by_name[self._by_binding[binding]][0]
        except KeyError:
            raise UnknownTool(f"no tool bound to {binding.grammar.value}:{binding.key}") from None

    def descriptor(self, name: str) -> PluginDescriptor:
        try:
            return self._by_name[name][0]
        except KeyError:
            raise UnknownTool(name) from None

    def factory(self, name: str) -> PluginFactory:
        try:
            return self._by_name[name][1]
        except KeyError:
            raise UnknownTool(name) from None

    def names(self) -> list[str]:
        return sorted(self._by_name)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def fence_tags(self) -> dict[str, str]:
        return {b.key: n for b, n in self._by_binding.items() if b.grammar is GrammarId.FENCE}

    def grammar(self, grammar_id: GrammarId | str) -> Grammar:
        """Build the parser grammar matching this registry's bindings."""
        grammar_id = GrammarId(grammar_id)
        if grammar_id is GrammarId.FENCE:
            return Grammar.fence(self.fence_tags())
        return Grammar(grammar_id)
