"""Regenerate the bundled workload files under src/partialexec/data.

Each trace is plain text tokenized at whitespace boundaries with a fixed
per-token latency; the latencies are the calibration knobs.

    python3 scripts/build_workloads.py
"""

from __future__ import annotations

import json
from pathlib import Path

from partialexec.tracegen import build_trace

DATA = Path(__file__).resolve().parents[1] / "src" / "partialexec" / "data"

TOKEN_US = 25_000
PREFILL_US = 40_000

CODEGEN_SCRIPT = """\
import numpy as np
import matplotlib.pyplot as plt
let days = 30
let start = 100
let drift = 1.5
sleep 420
let end = start + drift * days
let mean = (start + end) / 2
sleep 220
print start
print end
print mean
sleep 380
"""

CODEGEN = [
    ("I will write a short script that simulates a price series over thirty days, "
     "computes summary statistics and renders a chart.\n"
     "```python\n" + CODEGEN_SCRIPT + "```\n", TOKEN_US, PREFILL_US),
    ("The simulated price rises from 100 to 145 with a mean of 122.5, and the chart has been rendered.\n",
     TOKEN_US, PREFILL_US),
]

SEARCH = [
    ("I will look up a hello world program for each language.\n"
     '@call search {"query": "hello world python"}\n'
     '@call search {"query": "hello world c++"}\n'
     '@call search {"query": "hello world java"}\n', TOKEN_US, PREFILL_US),
    ("Here are the three programs. Python: print(\"Hello, World!\"). "
     "C++: include iostream and write std::cout << \"Hello, World!\" in main. "
     "Java: declare class Main with a main method calling System.out.println(\"Hello, World!\"). "
     "Each program prints the same greeting and exits, so all three can be compiled and run as they are.\n",
     TOKEN_US, PREFILL_US),
]

SEARCH_FIXTURES = {
    "responses": {
        "hello world python": 'print("Hello, World!")',
        "hello world c++": '#include <iostream>\nint main() { std::cout << "Hello, World!"; }',
        "hello world java": 'class Main { public static void main(String[] a) { System.out.println("Hello, World!"); } }',
        "Microsoft market cap": "3410",
        "Apple market cap": "3100",
    },
    "delay_us": 0,
    "delays": {
        "hello world python": 420_000,
        "hello world c++": 420_000,
        "hello world java": 420_000,
        "Microsoft market cap": 450_000,
        "Apple market cap": 450_000,
    },
}

PLANNING = [
    ("Plan: search both market caps, divide them with the calculator, then format the answer.\n"
     "#E1 = Search[Microsoft market cap]\n"
     "#E2 = Search[Apple market cap]\n"
     "#E3 = Calculator[#E1/#E2]\n"
     "#E4 = Format[ratio is #E3]\n", TOKEN_US, PREFILL_US),
    ("Microsoft is currently valued at 3410 billion dollars and Apple at 3100 billion dollars, "
     "so the market cap of Microsoft is 1.1 times that of Apple.\n", TOKEN_US, PREFILL_US),
]

VALIDATION = [
    ('I will fetch the local news.\n@call get_news {"location": "Seattle", "topic": "local events and '
     'community updates for this weekend including traffic advisories road closures weather alerts school '
     'board decisions city council votes new restaurant openings farmers market hours library programs museum '
     'exhibits park maintenance schedules transit changes and volunteer opportunities", '
     '"limit": 10}\n', TOKEN_US, 0),
    ("Here is the local news.\n", TOKEN_US, PREFILL_US),
]

DATABASE = [
    ('I will read every row of the inventory table.\n@call db_query {"op": "scan"}\n', TOKEN_US, PREFILL_US),
    ("The inventory holds three items: apples (12 in stock), bananas (7 in stock) and cherries (30 in stock).\n",
     TOKEN_US, PREFILL_US),
]

KV_TABLE = "item\tcount\napples\t12\nbananas\t7\ncherries\t30\n"

CALCULATOR = [
    ('@call calculator {"expression": "200*701"}\n', TOKEN_US, PREFILL_US),
    ("200 times 701 is 140200.\n", TOKEN_US, PREFILL_US),
]

WORKLOADS = {
    "codegen": dict(name="CodeGen", grammar="fence", rounds=CODEGEN,
                    prompt="Write a Python script that simulates and plots a price series.",
                    tool_settings={"interp": {"per_line_cost_us": {"let": 30_000, "print": 10_000},
                                              "import_cost_us": {"numpy": 1_000, "matplotlib.pyplot": 1_000}}}),
    "search": dict(name="Search", grammar="call", rounds=SEARCH, search_fixtures="search_fixtures.json",
                   prompt="Write hello world in Python, C++ and Java, searching for each."),
    "planning": dict(name="Planning", grammar="plan", rounds=PLANNING, search_fixtures="search_fixtures.json",
                     prompt="What is the ratio of the market caps of Microsoft and Apple?",
                     tool_settings={"plan_calculator": {"cost_us": 2_000}, "formatter": {"template": "{}"}}),
    "validation": dict(name="Validation", grammar="call", rounds=VALIDATION,
                       prompt="Get the local news for Seattle, Washington."),
    "database": dict(name="Database", grammar="call", rounds=DATABASE,
                     prompt="Select all the data from the inventory database.",
                     tool_settings={"kvdb": {"table_path": "inventory.tsv", "query_cost_us": 4_000,
                                             "row_cost_us": 200}}),
    "calculator": dict(name="Calculator", grammar="call", rounds=CALCULATOR,
                       prompt="Compute 200 x 701 using the calculator.",
                       tool_settings={"calculator": {"cost_us": 1_000}}),
}


def main() -> None:
    DATA.mkdir(exist_ok=True)
    (DATA / "inventory.tsv").write_text(KV_TABLE, encoding="utf-8")
    with open(DATA / "search_fixtures.json", "w", encoding="utf-8") as fh:
        json.dump(SEARCH_FIXTURES, fh, indent=1)
        fh.write("\n")
    for stem, w in WORKLOADS.items():
        build_trace(w["rounds"]).dump(DATA / f"{stem}.trace.json")
        spec = {"name": w["name"], "grammar": w["grammar"], "trace": f"{stem}.trace.json",
                "prompt": w["prompt"], "clock": "virtual", "modes": ["partial", "sequential"],
                "tool_settings": w.get("tool_settings", {})}
        if "search_fixtures" in w:
            spec["search_fixtures"] = w["search_fixtures"]
        with open(DATA / f"{stem}.json", "w", encoding="utf-8") as fh:
            json.dump(spec, fh, indent=1)
            fh.write("\n")


if __name__ == "__main__":
    main()
