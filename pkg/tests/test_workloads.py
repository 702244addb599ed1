from __future__ import annotations

import importlib.util
import json
from pathlib import Path

import pytest

from partialexec.parser import GrammarId
from partialexec.workloads import BUNDLED, WorkloadError, WorkloadSpec, bundled_path, data_dir, resolve

SCRIPT = Path(__file__).resolve().parents[1] / "scripts" / "build_workloads.py"


def test_six_bundled_workloads_load():
    assert list(BUNDLED) == ["CodeGen", "Search", "Planning", "Validation", "Database", "Calculator"]
    for name in BUNDLED:
        spec = resolve(name)
        assert spec.name == name
        assert spec.trace_path.is_file()
        assert len(spec.trace().rounds) == 2


def test_resolve_is_case_insensitive_and_accepts_paths():
    assert resolve("codegen").grammar is GrammarId.FENCE
    assert resolve(str(bundled_path("Planning"))).name == "Planning"


def test_relative_tool_paths_are_resolved():
    table = Path(resolve("Database").tool_settings["kvdb"]["table_path"])
    assert table.is_absolute() and table == data_dir() / "inventory.tsv"


@pytest.mark.parametrize("content,msg", [
    (None, "cannot read"), ("{", "not valid JSON"), ('{"grammar": "call"}', "lacks field"),
    ('{"trace": "calculator.trace.json", "grammar": "xml"}', "xml"),
    ('{"trace": "nope.json", "grammar": "call"}', "missing file"),
    ('{"trace": "calculator.trace.json", "grammar": "call", "clock": "wall"}', "clock"),
])
def test_bad_workload_files(tmp_path, content, msg):
    path = tmp_path / "w.json"
    if content is not None:
        path.write_text(content)
        (tmp_path / "calculator.trace.json").write_text(bundled_path("Calculator").with_name(
            "calculator.trace.json").read_text())
    with pytest.raises(WorkloadError, match=msg):
        WorkloadSpec.load(path)


def test_shipped_data_matches_generator(tmp_path, monkeypatch):
    loader = importlib.util.spec_from_file_location("build_workloads", SCRIPT)
    mod = importlib.util.module_from_spec(loader)
    loader.loader.exec_module(mod)
    monkeypatch.setattr(mod, "DATA", tmp_path)
    mod.main()
    generated = sorted(p.name for p in tmp_path.iterdir())
    shipped = sorted(p.name for p in data_dir().iterdir() if p.suffix in (".json", ".tsv"))
    assert generated == shipped
    for name in generated:
        a, b = tmp_path / name, data_dir() / name
        if name.endswith(".json"):
            assert json.loads(a.read_text()) == json.loads(b.read_text()), name
        else:
            assert a.read_text() == b.read_text()
