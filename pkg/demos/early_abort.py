"""A validator rejects a call argument while the rest of the call is still being decoded.

    python3 demos/early_abort.py
"""

from partialexec.analysis import detection_speedup
from partialexec.scheduler import Mode
from partialexec.timeline import render_gantt
from partialexec.workloads import resolve, run_workload

spec = resolve("Validation")
full_decode = spec.trace().rounds[0].generation_us

partial = run_workload(spec, Mode.PARTIAL)
sequential = run_workload(spec, Mode.SEQUENTIAL)

print(partial.response_text)
for label, res in (("partial", partial), ("sequential", sequential)):
    print(f"{label:<10} rejected after {res.time_to_abort_us / 1000:7.1f} ms "
          f"({res.time_to_abort_us / full_decode:.0%} of the full decode)")
print(f"detected {detection_speedup(partial, sequential):.0%} sooner\n")

tokens_after = [e for e in partial.timeline if e.kind == "TokenDecoded" and e.t > partial.abort_us]
print(f"tokens decoded after the abort signal: {len(tokens_after)}\n")
print(render_gantt(partial.timeline, width=60))
