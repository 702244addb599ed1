"""Build decode traces from plain text with a fixed per-token latency."""

from __future__ import annotations

import re
from typing import Iterable, Sequence

from .decoder import DecodeTrace, TraceEntry, TraceRound

# a newline alone, or optional spaces followed by a run of non-space characters
_TOKEN = re.compile(r"\n|[^\S\n]*\S+|[^\S\n]+")


def tokenize(text: str) -> list[str]:
    tokens = _TOKEN.findall(text)
    assert "".join(tokens) == text
    return tokens


def build_round(text: str, token_us: int, prefill_us: int = 0) -> TraceRound:
    return TraceRound([TraceEntry(tok, token_us) for tok in tokenize(text)], prefill_us, empty_response=not text)


def build_trace(rounds: Iterable[tuple[str, int, int]]) -> DecodeTrace:
    """``rounds`` holds ``(text, token_us, prefill_us)`` per round."""
    return DecodeTrace([build_round(text, tok_us, pre_us) for text, tok_us, pre_us in rounds])


def sleep_rounds(tool_us: Sequence[int], g_per_round_us: int, token_us: int = 10_000,
                 final_text: str = "done") -> DecodeTrace:
    """Synthetic fence trace: each tool round opens a fence whose first line sleeps
    ``tool_us[i]`` and pads with plain text until its decode time is ``g_per_round_us``.
    The final round decodes ``final_text``.
    """
    rounds = []
    for i, us in enumerate(tool_us):
        if us % 1000:
            raise ValueError("tool durations must be whole milliseconds")
        head = tokenize(f"```python\nsleep {us // 1000}\n```\n")
        n_fill = g_per_round_us // token_us - len(head)
        if n_fill < 0:
            raise ValueError("g_per_round too short for the tool region")
        entries = [TraceEntry(tok, token_us) for tok in head]
        entries += [TraceEntry(f" w{i}" if k else f"step{i}", token_us) for k in range(n_fill)]
        rounds.append(TraceRound(entries, 0))
    rounds.append(build_round(final_text, token_us))
    return DecodeTrace(rounds)
