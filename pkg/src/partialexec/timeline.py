"""Timestamped serving events, their TSV export, and a text Gantt rendering.

TSV columns: ``t_us, kind, round, job, piece, detail``; empty cells for
missing references.
"""

from __future__ import annotations

import io
import itertools
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, TextIO

_START = re.compile(r"start=(-?\d+)")

KINDS = ("TokenDecoded", "ToolStart", "PieceDispatched", "PieceExecuted", "ToolDone",
         "RoundStart", "RoundEnd", "AbortSignal", "ResponseReady")


@dataclass(frozen=True)
class TimelineEvent:
    t: int
    seq: int
    kind: str
    round: int | None = None
    job: str | None = None
    piece: int | None = None
    detail: str = ""

    @property
    def key(self) -> tuple[int, int]:
        return (self.t, self.seq)


class Timeline:
    def __init__(self):
        self._events: list[TimelineEvent] = []
        self._seq = itertools.count()

    def record(self, t: int, kind: str, round: int | None = None, job: str | None = None,
               piece: int | None = None, detail: str = "") -> TimelineEvent:
        if kind not in KINDS:
            raise ValueError(f"unknown timeline event kind {kind!r}")
        event = TimelineEvent(int(t), next(self._seq), kind, round, job, piece, detail)
        self._events.append(event)
        return event

    def events(self) -> list[TimelineEvent]:
        """All events ordered by time, ties broken by recording order."""
        return sorted(self._events, key=lambda e: e.key)


def _cell(value) -> str:
    if value is None:
        return ""
    return str(value).replace("\t", " ").replace("\n", "\\n")


def write_tsv(events: Iterable[TimelineEvent], out: TextIO | str | Path) -> None:
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="utf-8") as fh:
            write_tsv(events, fh)
        return
    for e in events:
        out.write("\t".join([str(e.t), e.kind, _cell(e.round), _cell(e.job), _cell(e.piece),
                             _cell(e.detail)]) + "\n")


def to_tsv(events: Iterable[TimelineEvent]) -> str:
    buf = io.StringIO()
    write_tsv(events, buf)
    return buf.getvalue()


def read_tsv(source: TextIO | str | Path) -> list[TimelineEvent]:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return read_tsv(fh)
    events = []
    for seq, line in enumerate(source):
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 6 or parts[1] not in KINDS:
            raise ValueError(f"line {seq + 1}: not a timeline record: {line!r}")
        t, kind, rnd, job, piece, detail = parts
        events.append(TimelineEvent(int(t), seq, kind, int(rnd) if rnd else None, job or None,
                                    int(piece) if piece else None, detail))
    return events


def render_gantt(events: list[TimelineEvent], width: int = 72) -> str:
    """One row per lane (``decode`` then each tool job).

    ``=`` decoding, ``#`` piece execution, ``.`` tool completion, ``!``
    abort signal, ``|`` end of a round's decoding.
    """
    if not events:
        raise ValueError("empty timeline")
    t0 = min(e.t for e in events)
    t1 = max(e.t for e in events)
    span = max(t1 - t0, 1)

    def col(t):
        return min(width - 1, (t - t0) * (width - 1) // span)

    decode = [" "] * width
    round_start = None
    for e in events:
        if e.kind == "RoundStart":
            round_start = e.t
        elif e.kind == "RoundEnd" and round_start is not None:
            for c in range(col(round_start), col(e.t) + 1):
                decode[c] = "="
            decode[col(e.t)] = "|"
            round_start = None
    lanes: dict[str, list[str]] = {}
    for e in events:
        if e.job is None:
            continue
        lane = lanes.setdefault(e.job, [" "] * width)
        if e.kind == "PieceExecuted":
            m = _START.search(e.detail)
            start = int(m.group(1)) if m else e.t
            for c in range(col(start), col(e.t) + 1):
                lane[c] = "#"
        elif e.kind == "ToolDone" and lane[col(e.t)] == " ":
            lane[col(e.t)] = "."
    for e in events:
        if e.kind == "AbortSignal":
            decode[col(e.t)] = "!"
            for lane in lanes.values():
                lane[col(e.t)] = "!"
    label = max([len("decode")] + [len(j) for j in lanes])
    rows = [f"{'decode'.ljust(label)} |{''.join(decode)}|"]
    rows += [f"{job.ljust(label)} |{''.join(lane)}|" for job, lane in lanes.items()]
    rows.append(f"{''.ljust(label)}  0{'':{width - 2}}{span / 1000:.1f} ms")
    return "\n".join(rows)
