"""How much overlap buys as tool time grows relative to decode time.

    python3 demos/ratio_sweep.py
"""

from partialexec.analysis import sweep

print(f"{'tool/decode':>11}  {'best case':>9}  {'measured':>8}")
for row in sweep([0.01, 0.1, 0.25, 0.5, 1, 2, 4, 10, 100]):
    bar = "#" * round(row.measured * 40)
    print(f"{row.r:>11g}  {row.theory:>9.1%}  {row.measured:>8.1%}  {bar}")
