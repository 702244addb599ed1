"""Time services shared by the decoder, tool workers and the timeline.

All times are integer microseconds. ``VirtualClock`` is a logical counter
where sleeping is an instantaneous advance, which makes overlap measurements
exact and repeatable. ``RealClock`` is backed by the monotonic wall clock.
"""

from __future__ import annotations

import threading
import time


class Clock:
    """Interface for a monotonic microsecond clock."""

    virtual = False

    def now_us(self) -> int:
        raise NotImplementedError

    def sleep_us(self, duration_us: float) -> None:
        raise NotImplementedError


class VirtualClock(Clock):
    """Logical time. Advancement is serialized behind a lock."""

    virtual = True

    def __init__(self, start_us: int = 0):
        self._now = int(start_us)
        self._lock = threading.Lock()

    def now_us(self) -> int:
        return self._now

    def sleep_us(self, duration_us: float) -> None:
        if duration_us < 0:
            raise ValueError("negative sleep")
        with self._lock:
            self._now += int(round(duration_us))

    def advance_to(self, t_us: int) -> None:
        """Move time forward to ``t_us``; moving backwards is a no-op."""
        with self._lock:
            if t_us > self._now:
                self._now = int(t_us)


class RealClock(Clock):
    """Wall-clock time measured from construction."""

    def __init__(self):
        self._origin = time.perf_counter_ns()

    def now_us(self) -> int:
        return (time.perf_counter_ns() - self._origin) // 1000

    def sleep_us(self, duration_us: float) -> None:
        if duration_us < 0:
            raise ValueError("negative sleep")
        if duration_us:
            time.sleep(duration_us / 1e6)


class LocalClock(Clock):
    """Private timeline of one simulated worker.

    A worker's sleeps only move its own cursor; the scheduler decides when
    the results become visible on the shared virtual clock.
    """

    virtual = True

    def __init__(self, start_us: int = 0):
        self.cursor = int(start_us)

    def now_us(self) -> int:
        return self.cursor

    def sleep_us(self, duration_us: float) -> None:
        if duration_us < 0:
            raise ValueError("negative sleep")
        self.cursor += int(round(duration_us))

    def catch_up(self, t_us: int) -> None:
        if t_us > self.cursor:
            self.cursor = int(t_us)


def make_clock(mode: str) -> Clock:
    if mode == "virtual":
        return VirtualClock()
    if mode == "real":
        return RealClock()
    raise ValueError(f"unknown clock mode {mode!r}")
