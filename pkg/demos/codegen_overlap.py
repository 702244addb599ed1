"""Serve the bundled CodeGen request twice and compare where the interpreter work lands.

    python3 demos/codegen_overlap.py
"""

from partialexec.scheduler import Mode
from partialexec.timeline import render_gantt
from partialexec.workloads import resolve, run_workload

spec = resolve("CodeGen")
runs = {mode: run_workload(spec, mode) for mode in Mode}

for mode, res in runs.items():
    first = res.rounds[0]
    print(f"{mode.value:<10} total {res.total_latency_us / 1000:7.1f} ms   "
          f"round 0 decode {first.g_time / 1000:6.1f} ms, waited {first.post_eos_wait / 1000:6.1f} ms after EOS")

seq, par = runs[Mode.SEQUENTIAL], runs[Mode.PARTIAL]
print(f"\nimprovement {seq.total_latency_us / par.total_latency_us - 1:.1%}")
print(f"same answer: {seq.response_text == par.response_text}\n")

# in the partial run the interpreter lane fills in while the decode lane is still busy
print(render_gantt(par.timeline, width=70))
print()
print(render_gantt(seq.timeline, width=70))
