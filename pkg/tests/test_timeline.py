from __future__ import annotations

import io

import pytest
from hypothesis import given, strategies as st

from partialexec.timeline import KINDS, Timeline, TimelineEvent, read_tsv, render_gantt, to_tsv, write_tsv


def sample() -> Timeline:
    tl = Timeline()
    tl.record(0, "RoundStart", round=0)
    tl.record(100, "ToolStart", round=0, job="interp#0")
    tl.record(300, "PieceExecuted", round=0, job="interp#0", piece=1, detail="start=200")
    tl.record(500, "RoundEnd", round=0, detail="decode")
    tl.record(700, "PieceExecuted", round=0, job="interp#0", piece=2, detail="start=500")
    tl.record(700, "ToolDone", round=0, job="interp#0", detail="DONE")
    tl.record(800, "ResponseReady")
    return tl


def test_events_sorted_by_time_then_sequence():
    tl = Timeline()
    tl.record(5, "RoundEnd")
    tl.record(1, "RoundStart")
    tl.record(5, "ResponseReady")
    assert [e.kind for e in tl.events()] == ["RoundStart", "RoundEnd", "ResponseReady"]


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        Timeline().record(0, "Nope")


def test_tsv_round_trip(tmp_path):
    events = sample().events()
    path = tmp_path / "t.tsv"
    write_tsv(events, path)
    back = read_tsv(path)
    strip = [(e.t, e.kind, e.round, e.job, e.piece, e.detail) for e in events]
    assert [(e.t, e.kind, e.round, e.job, e.piece, e.detail) for e in back] == strip


def test_tsv_escapes_tabs_and_newlines():
    tl = Timeline()
    tl.record(0, "AbortSignal", detail="a\tb\nc")
    line = to_tsv(tl.events())
    assert line.count("\t") == 5 and line.count("\n") == 1


def test_read_rejects_garbage():
    with pytest.raises(ValueError):
        read_tsv(io.StringIO("hello\tworld\n"))


@given(st.lists(st.tuples(st.integers(0, 10**9), st.sampled_from(KINDS),
                          st.one_of(st.none(), st.integers(0, 9)),
                          st.one_of(st.none(), st.sampled_from(["a#0", "b#1"])),
                          st.one_of(st.none(), st.integers(1, 50)),
                          st.text("xyz=0123 ", max_size=10)), max_size=30))
def test_round_trip_property(rows):
    tl = Timeline()
    for t, kind, rnd, job, piece, detail in rows:
        tl.record(t, kind, rnd, job, piece, detail)
    back = read_tsv(io.StringIO(to_tsv(tl.events())))
    assert [(e.t, e.kind, e.round, e.job, e.piece, e.detail) for e in back] == \
        [(e.t, e.kind, e.round, e.job, e.piece, e.detail) for e in tl.events()]


def test_gantt_lanes():
    chart = render_gantt(sample().events(), width=41)
    decode, lane, axis = chart.splitlines()
    assert decode.startswith("decode")
    assert "=" in decode and "|" in decode[len("decode") + 2:-1]
    assert lane.startswith("interp#0") and "#" in lane
    assert axis.strip().endswith("0.8 ms")
    # execution of piece 1 sits inside the decode span
    body = lane[lane.index("|") + 1:]
    assert body.index("#") < decode[decode.index("|") + 1:].rindex("|")


def test_gantt_abort_marker():
    tl = Timeline()
    tl.record(0, "RoundStart", round=0)
    tl.record(20, "AbortSignal", job="validator#0")
    tl.record(100, "RoundEnd", round=0)
    decode = render_gantt(tl.events(), width=11).splitlines()[0]
    assert decode.index("!") < decode.rindex("|")


def test_gantt_empty_raises():
    with pytest.raises(ValueError):
        render_gantt([])


def test_event_key():
    assert TimelineEvent(3, 7, "RoundStart").key == (3, 7)
