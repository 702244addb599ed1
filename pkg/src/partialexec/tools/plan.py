"""Plan stages (``#E<k> = Tool[args]``) and ``#E<k>`` reference substitution."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

from ..plugins import ToolError

STAGE = re.compile(r"#E(\d+) = ([A-Za-z_]\w*)\[(.*)\]\s*")
REF = re.compile(r"#E(\d+)")


@dataclass(frozen=True)
class Stage:
    index: int
    tool: str
    args: str
    line: str

    @property
    def refs(self) -> frozenset[int]:
        return frozenset(int(k) for k in REF.findall(self.args))

    @property
    def var(self) -> str:
        return f"#E{self.index}"


def parse_stage(line: str) -> Stage:
    m = STAGE.fullmatch(line)
    if m is None:
        raise ValueError(f"not a plan stage: {line!r}")
    return Stage(int(m.group(1)), m.group(2), m.group(3), line)


def substitute_refs(text: str, variables: Mapping[str, str]) -> str:
    def repl(m):
        try:
            return variables[m.group(0)]
        except KeyError:
            raise ToolError(f"undefined reference {m.group(0)}") from None

    return REF.sub(repl, text)
