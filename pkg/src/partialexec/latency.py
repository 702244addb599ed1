"""Closed-form latency model for tool-augmented generation.

A request runs ``n`` tool rounds followed by a final generation. Round ``i``
spends ``g[i]`` decoding and ``t[i]`` in tools; ``g[n]`` is the final round.
All durations are in microseconds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


class ModelIllFormed(ValueError):
    pass


class DegenerateModel(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class LatencyModel:
    g: tuple[float, ...]
    t: tuple[float, ...]

    def __init__(self, g: Sequence[float], t: Sequence[float]):
        g, t = tuple(g), tuple(t)
        if len(g) != len(t) + 1:
            raise ModelIllFormed(f"need len(g) == len(t) + 1, got {len(g)} and {len(t)}")
        if any(x < 0 for x in g + t):
            raise ModelIllFormed("durations must be non-negative")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "t", t)

    @property
    def n(self) -> int:
        return len(self.t)


def l_old(m: LatencyModel) -> float:
    """Latency when every tool waits for its round's decoding to finish."""
    return sum(g + t for g, t in zip(m.g, m.t)) + m.g[-1]


def round_bounds(g: float, t: float) -> tuple[float, float]:
    """Range of one round's duration once tool work overlaps decoding."""
    return max(g, t), g + t


def l_new_bounds(m: LatencyModel) -> tuple[float, float]:
    lower = sum(max(g, t) for g, t in zip(m.g, m.t)) + m.g[-1]
    return lower, l_old(m)


def best_case_improvement(m: LatencyModel) -> float:
    """Fractional improvement when overlap reaches the lower bound."""
    lower, upper = l_new_bounds(m)
    if lower == 0:
        raise DegenerateModel("lower bound is zero")
    return upper / lower - 1


def improvement(r: float) -> float:
    """Best-case improvement when tool time is ``r`` times decode time in every round
    and the final generation is negligible."""
    if r <= 0:
        raise ValueError(f"ratio must be positive, got {r}")
    return (1 + r) / max(1.0, r) - 1


def improvement_curve(ratios: Iterable[float]) -> list[tuple[float, float]]:
    return [(r, improvement(r)) for r in ratios]
