"""Incremental parser turning a decoded token stream into tool events.

The parser is a character-driven state machine: every event is emitted while
consuming a specific character of the text, never at a chunk boundary. That
makes the event sequence a function of the text alone, however the decoder
happens to split it into tokens.

Three grammars are supported, one per parser instance:

``fence``
    Markdown code fences. A line `````<tag>`` opens a region bound to the
    tool registered for ``<tag>``; each following line is one data piece;
    a line consisting of ````` closes the region.
``call``
    ``@call NAME {json}``. The tool starts as soon as ``NAME`` and the
    trailing space are seen; each scalar value of the argument object is
    reported once its terminator is consumed.
``plan``
    ``#E<k> = Tool[args]`` lines, each one a plan stage.

Every event carries the ``raw`` slice of source text it consumed, so joining
``raw`` over all events reproduces the input exactly.
"""

from __future__ import annotations

import codecs
import enum
import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping


class GrammarId(str, enum.Enum):
    FENCE = "fence"
    CALL = "call"
    PLAN = "plan"


class EventKind(str, enum.Enum):
    PLAIN_TEXT = "PlainText"
    TOOL_START = "ToolStart"
    TOOL_DATA = "ToolData"
    FIELD_COMPLETE = "FieldComplete"
    TOOL_END = "ToolEnd"
    DIAGNOSTIC = "Diagnostic"
    STREAM_END = "StreamEnd"


# Diagnostic codes
UNKNOWN_FENCE_TAG = "UnknownFenceTag"
MALFORMED_TOOL_SYNTAX = "MalformedToolSyntax"
UNCLOSED_TOOL_REGION = "UnclosedToolRegion"

EOS = "Eos"
ABORTED = "Aborted"


@dataclass(frozen=True)
class Token:
    text: str | bytes
    index: int


@dataclass(frozen=True)
class ParserEvent:
    kind: EventKind
    text: str = ""
    tool: str | None = None
    grammar: GrammarId | None = None
    path: tuple[str, ...] = ()
    reason: str | None = None
    raw: str = ""

    def __repr__(self) -> str:
        bits = [self.kind.value]
        if self.tool:
            bits.append(f"tool={self.tool}")
        if self.path:
            bits.append(f"path={list(self.path)}")
        if self.text:
            bits.append(repr(self.text))
        if self.reason:
            bits.append(f"reason={self.reason}")
        return f"ParserEvent({', '.join(bits)})"


@dataclass(frozen=True)
class Grammar:
    """Tool-message syntax of one model.

    ``fence_tags`` maps fence language tags to registered tool names.
    """

    id: GrammarId
    fence_tags: Mapping[str, str] = field(default_factory=dict)
    call_sentinel: str = "@call "
    plan_pattern: str = r"#E(\d+) = ([A-Za-z_]\w*)\[(.*)\]"

    @classmethod
    def fence(cls, tags: Mapping[str, str] | None = None) -> "Grammar":
        return cls(GrammarId.FENCE, fence_tags=dict({"python": "interp"} if tags is None else tags))

    @classmethod
    def call(cls) -> "Grammar":
        return cls(GrammarId.CALL)

    @classmethod
    def plan(cls) -> "Grammar":
        return cls(GrammarId.PLAN)

    @classmethod
    def from_id(cls, grammar_id: str | GrammarId, **config) -> "Grammar":
        return cls(GrammarId(grammar_id), **config)


class ParserFinalized(RuntimeError):
    pass


_FENCE_OPEN = re.compile(r"```([A-Za-z0-9_+.#-]+)[ \t\r]*")
_FENCE_CLOSE = re.compile(r"```[ \t\r]*")
_JSON_NUMBER = re.compile(r"-?(0|[1-9]\d*)(\.\d+)?([eE][+-]?\d+)?")
_NAME_START = re.compile(r"[A-Za-z_]")
_NAME_CHAR = re.compile(r"[A-Za-z0-9_.\-]")
_WS = " \t\r\n"


class _LineMachine:
    """Shared line splitting for the fence and plan grammars."""

    def __init__(self, grammar: Grammar):
        self.grammar = grammar
        self._line: list[str] = []

    def push(self, text: str, out: list[ParserEvent]) -> None:
        start = 0
        while True:
            nl = text.find("\n", start)
            if nl < 0:
                if start < len(text):
                    self._line.append(text[start:])
                return
            self._line.append(text[start:nl])
            line = "".join(self._line)
            self._line.clear()
            self.on_line(line, line + "\n", out)
            start = nl + 1

    def finish(self, out: list[ParserEvent]) -> None:
        if self._line:
            line = "".join(self._line)
            self._line.clear()
            self.on_line(line, line, out)
        self.on_close(out)

    def on_line(self, line: str, raw: str, out: list[ParserEvent]) -> None:
        raise NotImplementedError

    def on_close(self, out: list[ParserEvent]) -> None:
        pass


class _FenceMachine(_LineMachine):
    def __init__(self, grammar: Grammar):
        super().__init__(grammar)
        self.tool: str | None = None
        self.foreign = False

    def on_line(self, line, raw, out):
        g = GrammarId.FENCE
        if self.tool is not None:
            if _FENCE_CLOSE.fullmatch(line):
                out.append(ParserEvent(EventKind.TOOL_END, tool=self.tool, grammar=g, raw=raw))
                self.tool = None
            else:
                out.append(ParserEvent(EventKind.TOOL_DATA, line, tool=self.tool, grammar=g, raw=raw))
            return
        if self.foreign:
            out.append(ParserEvent(EventKind.PLAIN_TEXT, raw, raw=raw))
            if _FENCE_CLOSE.fullmatch(line):
                self.foreign = False
            return
        m = _FENCE_OPEN.fullmatch(line)
        if m is None:
            out.append(ParserEvent(EventKind.PLAIN_TEXT, raw, raw=raw))
            return
        tool = self.grammar.fence_tags.get(m.group(1))
        if tool is None:
            out.append(ParserEvent(EventKind.PLAIN_TEXT, raw, raw=raw))
            out.append(ParserEvent(EventKind.DIAGNOSTIC, f"no tool bound to fence tag {m.group(1)!r}",
                                   grammar=g, reason=UNKNOWN_FENCE_TAG))
            self.foreign = True
            return
        self.tool = tool
        out.append(ParserEvent(EventKind.TOOL_START, m.group(1), tool=tool, grammar=g, raw=raw))

    def on_close(self, out):
        if self.tool is not None:
            out.append(ParserEvent(EventKind.TOOL_END, tool=self.tool, grammar=GrammarId.FENCE))
            out.append(ParserEvent(EventKind.DIAGNOSTIC, "fence region never closed", tool=self.tool,
                                   grammar=GrammarId.FENCE, reason=UNCLOSED_TOOL_REGION))
            self.tool = None


class _PlanMachine(_LineMachine):
    def __init__(self, grammar: Grammar):
        super().__init__(grammar)
        self._pattern = re.compile(grammar.plan_pattern + r"[ \t\r]*")

    def on_line(self, line, raw, out):
        m = self._pattern.fullmatch(line)
        if m is None:
            out.append(ParserEvent(EventKind.PLAIN_TEXT, raw, raw=raw))
        else:
            out.append(ParserEvent(EventKind.TOOL_DATA, line.rstrip(" \t\r"), tool=m.group(2),
                                   grammar=GrammarId.PLAN, raw=raw))


# states of the call machine
_PLAIN, _SENT, _NAME, _PRE_OBJ, _OBJ, _RECOVER = range(6)


class _CallMachine:
    """``@call NAME {json}`` with an incremental JSON object reader.

    Supports objects, strings, numbers and true/false/null. Arrays are
    rejected as malformed.
    """

    def __init__(self, grammar: Grammar):
        self.sentinel = grammar.call_sentinel
        self.state = _PLAIN
        self._plain: list[str] = []
        self._cand = ""
        self._name = ""
        self._raw: list[str] = []
        # JSON reader
        self._sub = ""
        self._keys: list[str | None] = []
        self._lit: list[str] = []
        self._escape = False
        self._depth = 0

    # -- helpers
    def _take_raw(self) -> str:
        raw = "".join(self._raw)
        self._raw.clear()
        return raw

    def _emit(self, out, kind, text="", **kw):
        out.append(ParserEvent(kind, text, tool=self._name, grammar=GrammarId.CALL,
                               raw=self._take_raw(), **kw))

    def _flush_plain(self, out):
        if self._plain:
            text = "".join(self._plain)
            self._plain.clear()
            out.append(ParserEvent(EventKind.PLAIN_TEXT, text, raw=text))

    def _malformed(self, out, why: str, ch: str, consumed: bool = True):
        # the offending character is replayed in recovery so braces balance
        if consumed:
            self._raw.pop()
        out.append(ParserEvent(EventKind.DIAGNOSTIC, why, tool=self._name, grammar=GrammarId.CALL,
                               reason=MALFORMED_TOOL_SYNTAX))
        self._depth = len(self._keys)
        self._lit.clear()
        self._escape = False
        self.state = _RECOVER
        self._step(ch, out)

    def _end_region(self, out):
        self._emit(out, EventKind.TOOL_END)
        self.state = _PLAIN
        self._name = ""
        self._keys.clear()

    # -- driving
    def push(self, text: str, out: list[ParserEvent]) -> None:
        for ch in text:
            self._step(ch, out)

    def _step(self, ch: str, out: list[ParserEvent]) -> None:
        st = self.state
        if st == _PLAIN:
            if ch == self.sentinel[0]:
                self._cand = ch
                self.state = _SENT
                if self._cand == self.sentinel:
                    self._name = ""
                    self.state = _NAME
                return
            self._plain.append(ch)
            if ch == "\n":
                self._flush_plain(out)
            return
        if st == _SENT:
            cand = self._cand + ch
            if self.sentinel.startswith(cand):
                self._cand = cand
                if cand == self.sentinel:
                    self._name = ""
                    self.state = _NAME
                return
            self._plain.append(self._cand)
            self._cand = ""
            self.state = _PLAIN
            self._step(ch, out)
            return
        if st == _NAME:
            if ch == " " and self._name:
                self._flush_plain(out)
                self._raw.append(self._cand + self._name + ch)
                self._cand = ""
                self._emit(out, EventKind.TOOL_START)
                self.state = _PRE_OBJ
                return
            pattern = _NAME_CHAR if self._name else _NAME_START
            if pattern.match(ch):
                self._name += ch
                return
            self._plain.append(self._cand + self._name)
            self._cand = ""
            self._name = ""
            self.state = _PLAIN
            self._step(ch, out)
            return
        if st == _PRE_OBJ:
            if ch in _WS:
                self._raw.append(ch)
            elif ch == "{":
                self._raw.append(ch)
                self._keys = [None]
                self._sub = "key_or_end"
                self.state = _OBJ
            else:
                out.append(ParserEvent(EventKind.DIAGNOSTIC, f"expected '{{' after tool name, got {ch!r}",
                                       tool=self._name, grammar=GrammarId.CALL, reason=MALFORMED_TOOL_SYNTAX))
                self._end_region(out)
                self._step(ch, out)
            return
        if st == _RECOVER:
            self._raw.append(ch)
            if ch == "{":
                self._depth += 1
            elif ch == "}":
                self._depth -= 1
            if self._depth <= 0 or ch == "\n":
                self._end_region(out)
            return
        self._json_step(ch, out)

    def _json_step(self, ch: str, out: list[ParserEvent]) -> None:
        sub = self._sub
        if sub in ("num", "lit"):
            if (sub == "num" and ch in "0123456789+-.eE") or (sub == "lit" and ch.isalpha()):
                self._lit.append(ch)
                self._raw.append(ch)
                return
            if not self._finish_scalar(out, ch):
                return
            self._sub = "after"
            self._json_step(ch, out)
            return
        self._raw.append(ch)
        if sub in ("key", "str"):
            self._lit.append(ch)
            if self._escape:
                self._escape = False
            elif ch == "\\":
                self._escape = True
            elif ch == '"':
                literal = "".join(self._lit)
                self._lit.clear()
                try:
                    value = json.loads(literal)
                except ValueError:
                    self._malformed(out, f"bad string literal {literal!r}", ch)
                    return
                if sub == "key":
                    self._keys[-1] = value
                    self._sub = "colon"
                else:
                    self._emit(out, EventKind.FIELD_COMPLETE, value, path=self._path())
                    self._sub = "after"
            return
        if ch in _WS:
            return
        if sub in ("key_or_end", "key_only"):
            if ch == '"':
                self._lit = [ch]
                self._sub = "key"
            elif ch == "}" and sub == "key_or_end":
                self._close_object(out)
            else:
                self._malformed(out, f"expected object key, got {ch!r}", ch)
        elif sub == "colon":
            if ch == ":":
                self._sub = "value"
            else:
                self._malformed(out, f"expected ':', got {ch!r}", ch)
        elif sub == "value":
            if ch == '"':
                self._lit = [ch]
                self._sub = "str"
            elif ch == "{":
                self._keys.append(None)
                self._sub = "key_or_end"
            elif ch == "-" or ch.isdigit():
                self._lit = [ch]
                self._sub = "num"
            elif ch.isalpha():
                self._lit = [ch]
                self._sub = "lit"
            else:
                self._malformed(out, f"unsupported value starting with {ch!r}", ch)
        elif sub == "after":
            if ch == ",":
                self._sub = "key_only"
            elif ch == "}":
                self._close_object(out)
            else:
                self._malformed(out, f"expected ',' or '}}', got {ch!r}", ch)

    def _path(self) -> tuple[str, ...]:
        return tuple(k for k in self._keys if k is not None)

    def _finish_scalar(self, out, ch: str | None = None) -> bool:
        literal = "".join(self._lit)
        self._lit.clear()
        ok = (_JSON_NUMBER.fullmatch(literal) if self._sub == "num"
              else literal in ("true", "false", "null"))
        if not ok:
            if ch is None:
                out.append(ParserEvent(EventKind.DIAGNOSTIC, f"bad literal {literal!r}", tool=self._name,
                                       grammar=GrammarId.CALL, reason=MALFORMED_TOOL_SYNTAX))
            else:
                self._malformed(out, f"bad literal {literal!r}", ch, consumed=False)
            return False
        self._emit(out, EventKind.FIELD_COMPLETE, literal, path=self._path())
        return True

    def _close_object(self, out):
        self._keys.pop()
        if not self._keys:
            self._end_region(out)
        else:
            self._sub = "after"

    def finish(self, out: list[ParserEvent]) -> None:
        if self.state in (_SENT, _NAME):
            self._plain.append(self._cand + self._name)
            self._cand = self._name = ""
            self.state = _PLAIN
        if self.state == _PLAIN:
            self._flush_plain(out)
            return
        name = self._name
        if self.state == _OBJ and self._sub in ("num", "lit"):
            self._finish_scalar(out)
        self._end_region(out)
        out.append(ParserEvent(EventKind.DIAGNOSTIC, "call region never closed", tool=name,
                               grammar=GrammarId.CALL, reason=UNCLOSED_TOOL_REGION))


_MACHINES = {GrammarId.FENCE: _FenceMachine, GrammarId.CALL: _CallMachine, GrammarId.PLAN: _PlanMachine}


class StreamParser:
    """Per-round parser state. Feed tokens in order, then ``flush`` once."""

    def __init__(self, grammar: Grammar):
        self.grammar = grammar
        self._machine = _MACHINES[grammar.id](grammar)
        self._utf8 = codecs.getincrementaldecoder("utf-8")(errors="replace")
        self._next_index = 0
        self.finalized = False

    def feed(self, token: Token | str | bytes) -> list[ParserEvent]:
        if self.finalized:
            raise ParserFinalized("parser already flushed")
        if isinstance(token, Token):
            if token.index != self._next_index:
                raise ValueError(f"token index {token.index}, expected {self._next_index}")
            text = token.text
        else:
            text = token
        self._next_index += 1
        if isinstance(text, bytes):
            text = self._utf8.decode(text)
        out: list[ParserEvent] = []
        if text:
            self._machine.push(text, out)
        return out

    def flush(self) -> list[ParserEvent]:
        if self.finalized:
            raise ParserFinalized("parser already flushed")
        out: list[ParserEvent] = []
        tail = self._utf8.decode(b"", final=True)
        if tail:
            self._machine.push(tail, out)
        self._machine.finish(out)
        out.append(ParserEvent(EventKind.STREAM_END, reason=EOS))
        self.finalized = True
        return out

    def abort(self) -> list[ParserEvent]:
        """Finalize without draining buffered text (decoding was cancelled)."""
        if self.finalized:
            raise ParserFinalized("parser already flushed")
        self.finalized = True
        return [ParserEvent(EventKind.STREAM_END, reason=ABORTED)]


def parse_whole(text: str, grammar: Grammar) -> list[ParserEvent]:
    parser = StreamParser(grammar)
    return parser.feed(text) + parser.flush()


def parse_stream(chunks: Iterable[str | bytes], grammar: Grammar) -> list[ParserEvent]:
    parser = StreamParser(grammar)
    events: list[ParserEvent] = []
    for chunk in chunks:
        events.extend(parser.feed(chunk))
    return events + parser.flush()


def reconstruct(events: Iterable[ParserEvent]) -> str:
    return "".join(e.raw for e in events)
