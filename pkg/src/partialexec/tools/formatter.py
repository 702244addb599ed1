from __future__ import annotations

from ..plugins import ACCEPTED, Observation, Plugin
from .plan import substitute_refs


class Formatter(Plugin):
    """Renders ``settings["template"]`` (default ``"{}"``) around the stage argument.

    ``#E<k>`` references are filled from ``settings["variables"]``; an
    undefined reference fails the job.
    """

    def on_start(self, ctx):
        super().on_start(ctx)
        self.template = ctx.settings.get("template", "{}")
        self.variables = ctx.settings.get("variables", {})
        self.text: str | None = None

    def on_data(self, piece):
        self.text = self.template.replace("{}", substitute_refs(str(piece), self.variables))
        return ACCEPTED

    def on_finish(self):
        if self.text is None:
            return Observation.failure("IncompleteInput: nothing to format")
        return Observation(self.text)
