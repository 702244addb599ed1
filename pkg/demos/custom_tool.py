"""Plug a new tool into the registry and feed it a hand-written trace.

The tool receives one line at a time from a ``upper`` fenced block and
shouts each line back. Anything with on_start/on_data/on_finish works.

    python3 demos/custom_tool.py
"""

from partialexec.clock import VirtualClock
from partialexec.decoder import TraceDecoder
from partialexec.parser import GrammarId
from partialexec.plugins import ACCEPTED, Binding, Granularity, Observation, Plugin, PluginDescriptor
from partialexec.scheduler import Mode, Request, Scheduler
from partialexec.tools import builtin_registry
from partialexec.tracegen import build_trace


class Shout(Plugin):
    def on_start(self, ctx):
        super().on_start(ctx)
        self.lines = []

    def on_data(self, piece):
        self.ctx.clock.sleep_us(40_000)  # pretend each line costs 40 ms
        self.lines.append(piece.upper())
        return ACCEPTED

    def on_finish(self):
        return Observation("\n".join(self.lines))


registry = builtin_registry()
registry.register(PluginDescriptor("shout", Binding(GrammarId.FENCE, "upper"), Granularity.LINE), Shout)

trace = build_trace([
    ("Shouting now.\n```upper\nhello\nfrom a\nstreamed block\n```\nThat is all.\n", 20_000, 30_000),
    ("HELLO FROM A STREAMED BLOCK\n", 20_000, 30_000),
])

for mode in Mode:
    clock = VirtualClock()
    sched = Scheduler(registry, TraceDecoder(trace, clock), clock, GrammarId.FENCE)
    res = sched.serve(Request("Shout three lines.", mode))
    [(tool, obs)] = res.observations
    print(f"{mode.value:<10} {res.total_latency_us / 1000:6.1f} ms  {tool} -> {obs.text!r}")
