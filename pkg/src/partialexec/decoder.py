"""Token sources: a trace-driven simulated decoder and a streaming HTTP client.

Trace file format (JSON)::

    {"rounds": [{"prefill_latency_us": 120000,
                 "tokens": [{"text": "```python\\n", "latency_us": 20000}, ...]}]}

Replaying entry ``{"text": t, "latency_us": d}`` advances the clock by ``d``
and then emits ``t``. A round's generation time is therefore its prefill
latency plus the sum of its token latencies.
"""

from __future__ import annotations

import hashlib
import json
import os
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .clock import Clock, RealClock
from .parser import Token


class TraceExhausted(RuntimeError):
    pass


class StreamBroken(RuntimeError):
    pass


@dataclass(frozen=True)
class TraceEntry:
    text: str
    latency_us: int

    def __post_init__(self):
        if self.latency_us < 0:
            raise ValueError("latency_us must be >= 0")


@dataclass(frozen=True)
class TraceRound:
    tokens: tuple[TraceEntry, ...]
    prefill_latency_us: int = 0
    empty_response: bool = False

    def __post_init__(self):
        if self.prefill_latency_us < 0:
            raise ValueError("prefill_latency_us must be >= 0")
        if not self.tokens and not self.empty_response:
            raise ValueError("a round needs tokens unless marked empty_response")

    @property
    def text(self) -> str:
        return "".join(e.text for e in self.tokens)

    @property
    def generation_us(self) -> int:
        return self.prefill_latency_us + sum(e.latency_us for e in self.tokens)


@dataclass(frozen=True)
class DecodeTrace:
    rounds: tuple[TraceRound, ...]

    def __post_init__(self):
        if not self.rounds:
            raise ValueError("a trace needs at least one round")

    @classmethod
    def from_dict(cls, data: dict) -> "DecodeTrace":
        rounds = []
        for r in data["rounds"]:
            entries = tuple(TraceEntry(str(t["text"]), int(t["latency_us"])) for t in r.get("tokens", []))
            rounds.append(TraceRound(entries, int(r.get("prefill_latency_us", 0)),
                                     bool(r.get("empty_response", False))))
        return cls(tuple(rounds))

    def to_dict(self) -> dict:
        out = []
        for r in self.rounds:
            d = {"prefill_latency_us": r.prefill_latency_us,
                 "tokens": [{"text": e.text, "latency_us": e.latency_us} for e in r.tokens]}
            if r.empty_response:
                d["empty_response"] = True
            out.append(d)
        return {"rounds": out}

    @classmethod
    def load(cls, path: str | Path) -> "DecodeTrace":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, ensure_ascii=False)
            fh.write("\n")

    @classmethod
    def from_texts(cls, rounds: Iterable[tuple[int, Iterable[tuple[str, int]]]]) -> "DecodeTrace":
        """Build a trace from ``(prefill_us, [(text, latency_us), ...])`` pairs."""
        return cls(tuple(TraceRound(tuple(TraceEntry(t, d) for t, d in toks), pre) for pre, toks in rounds))


@dataclass(frozen=True)
class TokenEvent:
    token: Token
    emit_time: int


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class TraceDecoder:
    """Replays a :class:`DecodeTrace` one round per submitted prompt."""

    def __init__(self, trace: DecodeTrace, clock: Clock):
        self.trace = trace
        self.clock = clock
        self.round_index = -1
        self.audit: list[str] = []
        self._pos = 0
        self._active = False

    def start_round(self, prompt: str) -> None:
        if self._active:
            raise RuntimeError("previous round has not reached EOS")
        nxt = self.round_index + 1
        if nxt >= len(self.trace.rounds):
            raise TraceExhausted(f"trace has {len(self.trace.rounds)} rounds, round {nxt} requested")
        self.round_index = nxt
        self.audit.append(prompt_digest(prompt))
        self._pos = 0
        self._active = True
        self.clock.sleep_us(self.trace.rounds[nxt].prefill_latency_us)

    def next_token(self) -> TokenEvent | None:
        """Next token of the round, or ``None`` at EOS."""
        if not self._active:
            raise RuntimeError("no round in progress")
        tokens = self.trace.rounds[self.round_index].tokens
        if self._pos >= len(tokens):
            self._active = False
            return None
        entry = tokens[self._pos]
        self.clock.sleep_us(entry.latency_us)
        event = TokenEvent(Token(entry.text, self._pos), self.clock.now_us())
        self._pos += 1
        return event

    def cancel(self) -> None:
        """Stop decoding the current round immediately."""
        self._active = False

    def remaining_tokens(self) -> int:
        if self.round_index < 0:
            return 0
        return len(self.trace.rounds[self.round_index].tokens) - self._pos


class RemoteDecoder:
    """Streams deltas from a chat-completion endpoint over server-sent events.

    The bearer token is read from the environment variable named by
    ``api_key_env``.
    """

    def __init__(self, base_url: str, model: str, path: str = "/v1/chat/completions",
                 api_key_env: str = "PARTIALEXEC_API_KEY", clock: Clock | None = None,
                 timeout_s: float = 60.0):
        self.url = base_url.rstrip("/") + path
        self.model = model
        self.api_key_env = api_key_env
        self.clock = clock or RealClock()
        self.timeout_s = timeout_s
        self.audit: list[str] = []
        self._resp = None
        self._index = 0

    def start_round(self, prompt: str) -> None:
        body = json.dumps({"model": self.model, "stream": True, "temperature": 0,
                           "messages": [{"role": "user", "content": prompt}]}).encode()
        headers = {"Content-Type": "application/json", "Accept": "text/event-stream"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        req = urllib.request.Request(self.url, data=body, headers=headers, method="POST")
        try:
            self._resp = urllib.request.urlopen(req, timeout=self.timeout_s)
        except (urllib.error.URLError, OSError) as exc:
            raise StreamBroken(f"cannot open stream: {exc}") from exc
        self.audit.append(prompt_digest(prompt))
        self._index = 0

    def next_token(self) -> TokenEvent | None:
        if self._resp is None:
            raise RuntimeError("no round in progress")
        try:
            while True:
                line = self._resp.readline()
                if not line:
                    return self._eos()
                line = line.decode("utf-8").strip()
                if not line.startswith("data:"):
                    continue
                data = line[5:].strip()
                if data == "[DONE]":
                    return self._eos()
                chunk = json.loads(data)
                choices = chunk.get("choices") or [{}]
                text = (choices[0].get("delta") or {}).get("content")
                if text:
                    event = TokenEvent(Token(text, self._index), self.clock.now_us())
                    self._index += 1
                    return event
        except (OSError, ValueError) as exc:
            self.cancel()
            raise StreamBroken(str(exc)) from exc

    def _eos(self) -> None:
        self.cancel()
        return None

    def cancel(self) -> None:
        if self._resp is not None:
            self._resp.close()
            self._resp = None
