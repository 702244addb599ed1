"""Line-at-a-time mini interpreter standing in for a Python tool.

Statements::

    import <module>[ as <alias>]   cost from settings["import_cost_us"][module]
    sleep <ms>                     busy for <ms> milliseconds
    let <name> = <expr>
    print <expr>                   appends to the observation text
    def <name>:                    block; body lines up to a blank line
    call <name>
    repeat <n>:                    block executed n times
    # comment

A line ending in ``:`` opens a block that is buffered (``NeedMore``) and
executed when a blank line arrives. With ``external_mode`` enabled, every
line is instead run as an operating-system command and its stdout captured.
"""

from __future__ import annotations

import re
import subprocess

from ..plugins import ACCEPTED, NEED_MORE, Observation, Plugin, ToolError
from .arith import evaluate, format_value

_IMPORT = re.compile(r"import\s+([A-Za-z_][\w.]*)(?:\s+as\s+([A-Za-z_]\w*))?")
_LET = re.compile(r"let\s+([A-Za-z_]\w*)\s*=\s*(.+)")
_DEF = re.compile(r"def\s+([A-Za-z_]\w*)\s*:")
_REPEAT = re.compile(r"repeat\s+(.+):")
_CALL = re.compile(r"call\s+([A-Za-z_]\w*)")


class Interpreter:
    """The interpreter proper, independent of the plugin plumbing."""

    def __init__(self, clock, costs: dict | None = None, import_costs: dict | None = None):
        self.clock = clock
        self.costs = costs or {}
        self.import_costs = import_costs or {}
        self.env: dict[str, object] = {}
        self.procs: dict[str, list[str]] = {}
        self.modules: set[str] = set()
        self.output: list[str] = []

    def _charge(self, kind: str) -> None:
        cost = self.costs.get(kind, 0)
        if cost:
            self.clock.sleep_us(cost)

    def run_line(self, line: str) -> None:
        stmt = line.strip()
        if not stmt or stmt.startswith("#"):
            return
        word = stmt.split(None, 1)[0]
        if word == "import":
            m = _IMPORT.fullmatch(stmt)
            if not m:
                raise ToolError(f"bad import: {stmt!r}")
            self.clock.sleep_us(self.import_costs.get(m.group(1), self.costs.get("import", 0)))
            self.modules.add(m.group(2) or m.group(1))
        elif word == "sleep":
            ms = evaluate(stmt[5:], self.env)
            if isinstance(ms, str) or ms < 0:
                raise ToolError(f"bad sleep duration: {stmt!r}")
            self.clock.sleep_us(ms * 1000)
        elif word == "let":
            m = _LET.fullmatch(stmt)
            if not m:
                raise ToolError(f"bad assignment: {stmt!r}")
            self._charge("let")
            self.env[m.group(1)] = evaluate(m.group(2), self.env)
        elif word == "print":
            self._charge("print")
            self.output.append(format_value(evaluate(stmt[5:], self.env)) if stmt[5:].strip() else "")
        elif word == "call":
            m = _CALL.fullmatch(stmt)
            if not m or m.group(1) not in self.procs:
                raise ToolError(f"undefined procedure in {stmt!r}")
            self._charge("call")
            for body_line in self.procs[m.group(1)]:
                self.run_line(body_line)
        else:
            raise ToolError(f"unknown statement: {stmt!r}")

    def run_block(self, header: str, body: list[str]) -> None:
        head = header.strip()
        m = _DEF.fullmatch(head)
        if m:
            self._charge("def")
            self.procs[m.group(1)] = list(body)
            return
        m = _REPEAT.fullmatch(head)
        if m:
            count = evaluate(m.group(1), self.env)
            if not isinstance(count, int) or count < 0:
                raise ToolError(f"bad repeat count in {head!r}")
            for _ in range(count):
                for body_line in body:
                    self.run_line(body_line)
            return
        raise ToolError(f"unknown block: {head!r}")


class Interp(Plugin):
    def on_start(self, ctx):
        super().on_start(ctx)
        s = ctx.settings
        self.external = bool(s.get("external_mode", False))
        self.interp = Interpreter(ctx.clock, s.get("per_line_cost_us"), s.get("import_cost_us"))
        self.block: list[str] | None = None

    def on_data(self, piece):
        line = str(piece)
        if self.external:
            self._run_external(line)
            return ACCEPTED
        if self.block is not None:
            if line.strip():
                self.block.append(line)
                return NEED_MORE
            header, *body = self.block
            self.block = None
            self.interp.run_block(header, body)
            return ACCEPTED
        if line.rstrip().endswith(":"):
            self.block = [line]
            return NEED_MORE
        self.interp.run_line(line)
        return ACCEPTED

    def _run_external(self, line: str) -> None:
        if not line.strip():
            return
        proc = subprocess.run(line, shell=True, capture_output=True, text=True,
                              timeout=self.ctx.settings.get("command_timeout_s", 30))
        if proc.returncode:
            raise ToolError(f"command exited {proc.returncode}: {proc.stderr.strip()}")
        self.interp.output.append(proc.stdout.rstrip("\n"))

    def on_finish(self):
        text = "\n".join(self.interp.output)
        if self.block is not None:
            return Observation.failure(f"IncompleteInput: block {self.block[0].strip()!r} never closed", text)
        return Observation(text)
