"""Workload definitions and the six bundled workloads.

A workload file is JSON::

    {"name": "CodeGen",
     "grammar": "fence",
     "trace": "codegen.trace.json",
     "prompt": "...",
     "clock": "virtual",
     "modes": ["partial", "sequential"],
     "tool_settings": {"interp": {...}},
     "search_fixtures": "search_fixtures.json"}

Relative paths resolve against the workload file's directory. Settings keys
ending in ``_path`` are resolved the same way. When ``search_fixtures`` is
given, a mock search server is started for each run and its URL is written
into the ``base_url`` setting of every search tool.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .clock import Clock, make_clock
from .decoder import DecodeTrace, TraceDecoder
from .parser import GrammarId
from .plugins import Registry
from .runtime import DEFAULT_DRAIN_TIMEOUT_US
from .scheduler import Mode, Request, Scheduler, ServeResult
from .tools import MockSearchServer, builtin_registry

SEARCH_TOOLS = ("websearch", "plan_search")

BUNDLED = {
    "CodeGen": "codegen.json",
    "Search": "search.json",
    "Planning": "planning.json",
    "Validation": "validation.json",
    "Database": "database.json",
    "Calculator": "calculator.json",
}


class WorkloadError(ValueError):
    pass


@dataclass
class WorkloadSpec:
    name: str
    trace_path: Path
    grammar: GrammarId
    prompt: str = ""
    tool_settings: dict[str, dict] = field(default_factory=dict)
    clock: str = "virtual"
    modes: list[Mode] = field(default_factory=lambda: [Mode.PARTIAL, Mode.SEQUENTIAL])
    search_fixtures: Path | None = None
    max_rounds: int = 8

    @classmethod
    def load(cls, path: str | Path) -> "WorkloadSpec":
        path = Path(path)
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise WorkloadError(f"cannot read workload {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise WorkloadError(f"workload {path} is not valid JSON: {exc}") from exc
        base = path.parent
        try:
            spec = cls(
                name=data.get("name", path.stem),
                trace_path=base / data["trace"],
                grammar=GrammarId(data["grammar"]),
                prompt=data.get("prompt", ""),
                tool_settings={tool: _resolve_paths(s, base) for tool, s in data.get("tool_settings", {}).items()},
                clock=data.get("clock", "virtual"),
                modes=[Mode(m) for m in data.get("modes", ["partial", "sequential"])],
                search_fixtures=base / data["search_fixtures"] if data.get("search_fixtures") else None,
                max_rounds=int(data.get("max_rounds", 8)),
            )
        except KeyError as exc:
            raise WorkloadError(f"workload {path} lacks field {exc.args[0]!r}") from exc
        except ValueError as exc:
            raise WorkloadError(f"workload {path}: {exc}") from exc
        spec.validate()
        return spec

    def validate(self) -> None:
        if self.clock not in ("virtual", "real"):
            raise WorkloadError(f"{self.name}: clock must be 'virtual' or 'real'")
        missing = [p for p in [self.trace_path, self.search_fixtures] if p is not None and not p.is_file()]
        missing += [Path(v) for s in self.tool_settings.values() for k, v in s.items()
                    if k.endswith("_path") and not Path(v).is_file()]
        if missing:
            raise WorkloadError(f"{self.name}: missing file {missing[0]}")

    def trace(self) -> DecodeTrace:
        return DecodeTrace.load(self.trace_path)


def _resolve_paths(settings: dict, base: Path) -> dict:
    return {k: str(base / v) if k.endswith("_path") and isinstance(v, str) else v for k, v in settings.items()}


def data_dir() -> Path:
    return Path(str(resources.files("partialexec") / "data"))


def bundled_path(name: str) -> Path:
    return data_dir() / BUNDLED[name]


def resolve(workload: str | Path) -> WorkloadSpec:
    """A bundled workload by name (case-insensitive) or a workload file path."""
    names = {n.lower(): n for n in BUNDLED}
    if isinstance(workload, str) and workload.lower() in names:
        return WorkloadSpec.load(bundled_path(names[workload.lower()]))
    return WorkloadSpec.load(workload)


def run_workload(spec: WorkloadSpec, mode: Mode | str, clock: Clock | None = None,
                 registry: Registry | None = None, drain_timeout_us: int = DEFAULT_DRAIN_TIMEOUT_US,
                 backend: str = "thread") -> ServeResult:
    """Serve the workload's request once on a fresh clock, decoder and mock server."""
    clock = clock or make_clock(spec.clock)
    registry = registry or builtin_registry()
    settings = {k: dict(v) for k, v in spec.tool_settings.items()}
    server = None
    if spec.search_fixtures is not None:
        server = MockSearchServer.from_fixture_file(spec.search_fixtures, simulate_delay=clock.virtual).start()
        for tool in SEARCH_TOOLS:
            settings.setdefault(tool, {})["base_url"] = server.base_url
    try:
        scheduler = Scheduler(registry, TraceDecoder(spec.trace(), clock), clock, spec.grammar,
                              tool_settings=settings, drain_timeout_us=drain_timeout_us, backend=backend)
        return scheduler.serve(Request(spec.prompt, Mode(mode), max_rounds=spec.max_rounds, id=spec.name))
    finally:
        if server is not None:
            server.stop()
