from __future__ import annotations

import json
import re

from ..plugins import ACCEPTED, Field, Observation, Plugin, ToolError, abort

DEFAULT_SCHEMA = {"required": ["location"], "formats": {"location": "city_state"}}

_CITY_STATE = re.compile(r"\s*(?P<city>[^,]*?)\s*(?:,\s*(?P<state>.*?)\s*)?")
_STATE_CODE = re.compile(r"[A-Z]{2}")


def check_city_state(value: str) -> str | None:
    """Problem with a ``"<city>, <ST>"`` value, or None if it is valid."""
    m = _CITY_STATE.fullmatch(value)
    if not m.group("city"):
        return "missing city name"
    state = m.group("state")
    if state is None or not state:
        return "missing state code"
    if not _STATE_CODE.fullmatch(state):
        return f"invalid state code {state!r}"
    return None


CHECKS = {"city_state": check_city_state}


class Validator(Plugin):
    """Checks call arguments field by field and aborts on the first bad value."""

    def on_start(self, ctx):
        super().on_start(ctx)
        schema = ctx.settings.get("schema", DEFAULT_SCHEMA)
        self.required = list(schema.get("required", []))
        self.formats = dict(schema.get("formats", {}))
        self.seen: dict[str, str] = {}

    def on_data(self, piece):
        if isinstance(piece, Field):
            name, value = "/".join(piece.path), piece.value
        else:
            path, value = piece
            name = "/".join(path) if isinstance(path, (list, tuple)) else str(path)
        fmt = self.formats.get(name)
        if fmt is not None:
            if fmt not in CHECKS:
                raise ToolError(f"unknown format {fmt!r}")
            problem = CHECKS[fmt](value)
            if problem:
                return abort(problem)
        self.seen[name] = value
        return ACCEPTED

    def on_finish(self):
        missing = [f for f in self.required if f not in self.seen]
        if missing:
            return Observation.failure(f"missing required field {missing[0]!r}")
        return Observation(json.dumps(self.seen, sort_keys=True))
