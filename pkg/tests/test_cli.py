"""Command-line behaviour, driven in-process through main(argv): exit
codes, trace serialization, verification gating, and monitoring."""

from __future__ import annotations

import json

import pytest

from rill import smt
from rill.cli import CORPUS_DIR, RunConfig, corpus, main


def _c(name: str) -> str:
    return str(CORPUS_DIR / name)


# ---------------------------------------------------------------------------
# corpus


def test_corpus_lists_all_bundled_programs(capsys):
    assert main(["corpus"]) == 0
    names = capsys.readouterr().out.split()
    assert names == corpus()
    assert "counter.mrv" in names and "collision.mrv" in names
    assert len(names) == 13


def test_corpus_resolves_one_name(capsys):
    assert main(["corpus", "counter"]) == 0
    out = capsys.readouterr().out.strip()
    assert out.endswith("counter.mrv")
    assert main(["corpus", "no_such_program"]) == 2


# ---------------------------------------------------------------------------
# verify


def test_verify_counter_passes_with_both_obligations(capsys):
    assert main(["verify", _c("counter.mrv")]) == 0
    out = capsys.readouterr().out
    assert "0 <= 0" in out
    assert "0 <= x => 0 <= x + 1" in out
    assert "2/2 obligations valid" in out


def test_verify_failure_exits_one(capsys):
    assert main(["verify", _c("counter_bad.mrv")]) == 1
    assert "[invalid]" in capsys.readouterr().out


def test_verify_writes_a_json_report(tmp_path, capsys):
    report = tmp_path / "report.json"
    assert main(["verify", _c("square_weak.mrv"), "--json", str(report)]) == 1
    payload = json.loads(report.read_text())
    assert payload["passed"] is False
    assert payload["file"].endswith("square_weak.mrv")
    verdicts = {row["verdict"] for row in payload["obligations"]}
    assert "invalid" in verdicts


def test_smt_dump_keeps_solver_scripts(tmp_path, capsys):
    smt.clear_cache()  # cached verdicts never reach the solver or the dump
    dump = tmp_path / "scripts"
    assert main(["--smt-dump", str(dump), "verify", _c("counter.mrv")]) == 0
    kept = sorted(dump.glob("*.smt2"))
    assert kept, "expected at least one dumped script"
    assert "(check-sat)" in kept[0].read_text()


# ---------------------------------------------------------------------------
# run


def test_run_counter_writes_csv(capsys):
    assert main(["run", _c("counter.mrv"), "--steps", "5"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "instant,x,main"
    assert lines[1] == "0,0,0"
    assert lines[5] == "4,4,4"


def test_run_refuses_an_unverified_program(capsys):
    assert main(["run", _c("counter_bad.mrv"), "--steps", "3"]) == 1
    err = capsys.readouterr().err
    assert "verification failed" in err
    assert "--unchecked" in err


def test_run_unchecked_skips_the_gate(capsys):
    assert main(
        ["run", _c("counter_bad.mrv"), "--steps", "3", "--unchecked"]
    ) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[1] == "0,-1,-1"


def test_run_to_file_in_jsonl_with_robot_devices(tmp_path, capsys):
    out = tmp_path / "trace.jsonl"
    code = main([
        "run", _c("tank_robot.mrv"), "--steps", "8", "--unchecked",
        "--robot-mode", "--devices", str(CORPUS_DIR / "tank_devices.json"),
        "--format", "jsonl", "--output", str(out),
    ])
    assert code == 0
    records = [json.loads(ln) for ln in out.read_text().splitlines()]
    assert [r["instant"] for r in records] == list(range(8))
    assert records[0]["writes"] == []
    assert records[1]["writes"] == [{"key": "flow", "value": 0.0}]
    assert records[1]["values"]["lm"] == 14.5  # the sampled sensor value
    assert records[6]["writes"] == [{"key": "flow", "value": 0.5}]


def test_monitor_violation_exits_one(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    code = main([
        "run", _c("collision_bad.mrv"), "--steps", "60", "--unchecked",
        "--monitor", "--output", str(out),
    ])
    assert code == 1
    err = capsys.readouterr().err
    assert "VIOLATION at instant 42" in err
    assert out.exists()


def test_monitor_inconclusive_is_not_a_failure(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    code = main([
        "run", _c("collision_crawl.mrv"), "--steps", "50", "--unchecked",
        "--monitor", "--output", str(out),
    ])
    assert code == 0
    assert "no violation in 50 instants" in capsys.readouterr().err


def test_runtime_errors_carry_the_instant(tmp_path, capsys):
    bad = tmp_path / "div.mrv"
    bad.write_text("let d = 0.1 fby 0.0 in 1.0 / d\n", encoding="utf-8")
    code = main(["run", str(bad), "--steps", "5", "--unchecked"])
    assert code == 1
    assert "runtime error at instant 1: division by zero" \
        in capsys.readouterr().err


# ---------------------------------------------------------------------------
# usage and static errors exit 2


def test_robot_mode_requires_devices(capsys):
    code = main(["run", _c("tank_robot.mrv"), "--steps", "3", "--robot-mode",
                 "--unchecked"])
    assert code == 2
    assert "--robot-mode requires --devices" in capsys.readouterr().err


def test_negative_steps_are_rejected(capsys):
    code = main(["run", _c("counter.mrv"), "--steps", "-1", "--unchecked"])
    assert code == 2
    assert "steps must be nonnegative" in capsys.readouterr().err


def test_missing_file_exits_two(capsys):
    assert main(["verify", "no_such_file.mrv"]) == 2
    assert "error:" in capsys.readouterr().err


def test_parse_errors_exit_two(tmp_path, capsys):
    bad = tmp_path / "broken.mrv"
    bad.write_text("let = in\n", encoding="utf-8")
    assert main(["verify", str(bad)]) == 2
    assert "ParseError" in capsys.readouterr().err


def test_scope_errors_exit_two(tmp_path, capsys):
    bad = tmp_path / "unbound.mrv"
    bad.write_text("let x = 1 in y\n", encoding="utf-8")
    assert main(["verify", str(bad)]) == 2
    assert "ScopeError" in capsys.readouterr().err


def test_run_config_validates_directly():
    with pytest.raises(ValueError):
        RunConfig(steps=-1)
    with pytest.raises(ValueError):
        RunConfig(robot_mode=True)
