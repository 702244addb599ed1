from __future__ import annotations

import csv
import subprocess
import sys

import pytest

from partialexec.cli import main


def test_list(capsys):
    assert main(["--list"]) == 0
    assert capsys.readouterr().out.split() == ["CodeGen", "Search", "Planning", "Validation", "Database",
                                               "Calculator"]


def test_no_command_is_usage_error(capsys):
    assert main([]) == 2


@pytest.mark.parametrize("argv", [["run"], ["bench", "--runs", "0"], ["sweep", "--ratios", "1,-2"],
                                  ["sweep", "--ratios", "x"], ["run", "Calculator", "--mode", "eager"]])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2


def test_run_bad_path(capsys, tmp_path):
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    assert "cannot read" in capsys.readouterr().err


def test_run_calculator(capsys, tmp_path):
    tl = tmp_path / "calc.tsv"
    assert main(["run", "Calculator", "--timeline", str(tl)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("200 times 701 is 140200.")
    assert "status ok" in out and "calculator" in out
    assert tl.read_text().splitlines()[0].split("\t")[1] == "RoundStart"


def test_run_validation_aborts(capsys):
    assert main(["run", "Validation", "--mode", "partial"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "ABORTED: missing state code"
    assert "time to abort" in out


def test_run_is_byte_identical_across_invocations(capsys):
    main(["run", "Planning"])
    first = capsys.readouterr().out
    main(["run", "Planning"])
    assert capsys.readouterr().out == first


def test_bench_csv(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert main(["bench", "--runs", "2", "--csv", str(out), "--bars", str(tmp_path / "bars.tsv")]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["workload", "mode", "run", "latency_us"]
    assert len(rows) - 1 == 6 * 2 * 2
    text = capsys.readouterr().out
    assert "CodeGen      improvement" in text
    stddevs = [line.split()[-1] for line in text.splitlines()[1:13]]
    assert set(stddevs) == {"0.000"}


def test_bench_single_mode_and_timelines(tmp_path, capsys):
    assert main(["bench", "Search", "--modes", "partial", "--timeline", str(tmp_path / "tl")]) == 0
    assert (tmp_path / "tl" / "Search.partial.tsv").is_file()
    assert "improvement" not in capsys.readouterr().out


def test_sweep_command(tmp_path, capsys):
    out = tmp_path / "s.tsv"
    assert main(["sweep", "--ratios", "0.5,1", "--rounds", "1", "--g-ms", "100", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 2


def test_report_codegen_and_validation(tmp_path, capsys):
    for name in ("CodeGen", "Validation"):
        tl = tmp_path / f"{name}.tsv"
        main(["run", name, "--timeline", str(tl)])
        capsys.readouterr()
        assert main(["report", "--timeline", str(tl), "--width", "60"]) == 0
        chart = capsys.readouterr().out.splitlines()
        assert chart[0].startswith("decode")
        if name == "CodeGen":
            lane = next(ln for ln in chart if ln.startswith("interp"))
            eos = chart[0].rindex("|", 0, len(chart[0]) - 1)
            assert "#" in lane[:eos]
        else:
            assert "!" in chart[0]


def test_report_errors(tmp_path, capsys):
    empty = tmp_path / "e.tsv"
    empty.write_text("")
    assert main(["report", "--timeline", str(empty)]) == 2
    assert main(["report", "--timeline", str(tmp_path / "nope.tsv")]) == 2
    garbage = tmp_path / "g.tsv"
    garbage.write_text("not a timeline\n")
    assert main(["report", "--timeline", str(garbage)]) == 2


def test_overhead_command(capsys):
    assert main(["overhead", "Calculator"]) == 0
    assert "parse+dispatch" in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "partialexec", "--list"], capture_output=True, text=True)
    assert proc.returncode == 0 and "Validation" in proc.stdout
