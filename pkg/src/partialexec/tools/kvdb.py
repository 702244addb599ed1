"""Tab-separated key/value table: a header line of column names, then rows."""

from __future__ import annotations

from pathlib import Path

from ..plugins import ACCEPTED, Observation, Plugin, ToolError


def load_table(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines:
        raise ToolError(f"table {path} has no header")
    header = lines[0].split("\t")
    rows = [ln.split("\t") for ln in lines[1:] if ln]
    return header, rows


class KvDb(Plugin):
    """``scan`` returns every row in file order; ``get`` the first row whose key matches."""

    def on_start(self, ctx):
        super().on_start(ctx)
        path = ctx.settings.get("table_path")
        if not path:
            raise ToolError("kvdb needs settings['table_path']")
        self.header, self.rows = load_table(path)
        self.reply: str | None = None

    def on_data(self, piece):
        args = piece if isinstance(piece, dict) else {"op": str(piece)}
        op = args.get("op", "scan")
        cost = self.ctx.settings.get("query_cost_us", 0)
        if op == "scan":
            hits = self.rows
        elif op == "get":
            key = args.get("key")
            hits = [r for r in self.rows if r and r[0] == key][:1]
            if not hits:
                raise ToolError(f"key {key!r} not found")
        else:
            raise ToolError(f"unknown op {op!r}")
        self.ctx.clock.sleep_us(cost + self.ctx.settings.get("row_cost_us", 0) * len(hits))
        self.reply = "\n".join("\t".join(r) for r in hits)
        return ACCEPTED

    def on_finish(self):
        if self.reply is None:
            return Observation.failure("IncompleteInput: no query received")
        return Observation(self.reply)
