from __future__ import annotations

from ..plugins import ACCEPTED, Observation, Plugin, ToolError
from .arith import evaluate, format_value


class Calculator(Plugin):
    """Evaluates one arithmetic expression.

    Accepts either the bare expression or a call's argument object with an
    ``expression`` key.
    """

    def on_start(self, ctx):
        super().on_start(ctx)
        self.result: str | None = None

    def on_data(self, piece):
        expr = piece.get("expression") if isinstance(piece, dict) else piece
        if not isinstance(expr, str) or not expr.strip():
            raise ToolError("missing expression")
        self.ctx.clock.sleep_us(self.ctx.settings.get("cost_us", 0))
        self.result = format_value(evaluate(expr))
        return ACCEPTED

    def on_finish(self):
        if self.result is None:
            return Observation.failure("IncompleteInput: no expression received")
        return Observation(self.result)
