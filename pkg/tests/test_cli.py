import io
import subprocess
import sys

import pytest
import yaml

from fleetreg.cli import end_to_end, main
from fleetreg.manifest import builtin_bzl_manifest, emit_manifest
from fleetreg.reporting import read_history

DAILY = "kind: schedule\nvariables: {daily: 1, schedule_name: nightly}\n"
MR = "kind: merge_request\ntarget_branch: main\nlabels: [disable-uvm]\n"


@pytest.fixture
def files(tmp_path):
    def write(name, text):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return write


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_help_via_module():
    proc = subprocess.run([sys.executable, "-m", "fleetreg", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("validate", "plan", "trigger", "run", "report", "history", "replay-table1"):
        assert cmd in proc.stdout


def test_unknown_subcommand_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["launch"])
    assert exc.value.code == 2


class TestValidate:
    def test_builtin(self, capsys):
        code, out, _ = run(["validate"], capsys)
        assert code == 0 and "1738 tests" in out

    def test_emit_round_trip(self, capsys, files):
        code, out, _ = run(["validate", "--emit"], capsys)
        assert code == 0 and out == emit_manifest(builtin_bzl_manifest())
        path = files("m.yaml", out)
        assert run(["validate", "--manifest", path, "--emit"], capsys)[1] == out

    def test_bad_manifest_exits_2_with_path(self, capsys, files):
        text = emit_manifest(builtin_bzl_manifest()).replace("failure_threshold: 0.0", "failure_threshold: 1.5", 1)
        code, _, err = run(["validate", "--manifest", files("m.yaml", text)], capsys)
        assert code == 2
        assert "suites[0].failure_threshold" in err

    def test_missing_file_exits_3(self, capsys, tmp_path):
        code, _, err = run(["validate", "--manifest", str(tmp_path / "nope.yaml")], capsys)
        assert code in (2, 3) and "nope.yaml" in err


class TestPlanRunReport:
    def test_pipeline_of_files(self, capsys, tmp_path):
        plan_path = tmp_path / "plan.yaml"
        out_path = tmp_path / "run.yaml"
        assert main(["plan", "--mode", "replay", "--out", str(plan_path)]) == 0
        assert main(["run", "--plan", str(plan_path), "--out", str(out_path)]) == 0
        trace_path = tmp_path / "run.trace.yaml"
        assert trace_path.exists()
        report = yaml.safe_load(out_path.read_text())
        assert report["campaign_wall_time"] == 3169.6
        csv_path = tmp_path / "s.csv"
        code = main(["report", "--plan", str(plan_path), "--trace", str(trace_path),
                     "--out", str(tmp_path / "again.yaml"), "--csv", str(csv_path)])
        assert code == 0
        assert csv_path.read_text().count("\n") == 15
        capsys.readouterr()

    def test_failing_run_exits_1(self, tmp_path, capsys):
        plan_path = tmp_path / "plan.yaml"
        main(["plan", "--out", str(plan_path)])
        assert main(["run", "--plan", str(plan_path), "--fail-rate", "1", "--out", str(tmp_path / "r.yaml")]) == 1

    def test_stdin_plan_and_stdout_report(self, capsys, monkeypatch):
        main(["plan", "--devices", "4"])
        plan_text = capsys.readouterr().out
        monkeypatch.setattr(sys, "stdin", io.StringIO(plan_text))
        code, out, _ = run(["run", "--plan", "-"], capsys)
        assert code == 0 and yaml.safe_load(out)["verdict"] == "pass"

    def test_real_mode_requires_command(self, tmp_path, capsys):
        plan_path = tmp_path / "plan.yaml"
        main(["plan", "--out", str(plan_path)])
        code, _, err = run(["run", "--plan", str(plan_path), "--mode", "real"], capsys)
        assert code == 2 and "--runner-cmd" in err

    def test_plan_for_other_fleet_exits_3(self, tmp_path, capsys, files):
        plan_path = tmp_path / "plan.yaml"
        main(["plan", "--out", str(plan_path)])
        other = files("m.yaml", "schema_version: 1\nfleet: {nodes: 1, devices_per_node: 2}\nstages: []\n"
                                "suites:\n  - {name: solo, category: baremetal, total_tests: 2, seq_duration: 4,"
                                " divisibility: divisible, failure_threshold: 0.0}\n")
        code, _, _ = run(["run", "--plan", str(plan_path), "--manifest", other], capsys)
        assert code == 3


class TestTrigger:
    def test_classify_only(self, capsys, files):
        code, out, _ = run(["trigger", "--event", files("e.yaml", MR)], capsys)
        doc = yaml.safe_load(out)
        assert code == 0
        assert doc == {"trigger": "Torture", "jobs": ["lint:lint", "simulation:smoke-sim"]}

    def test_unknown_label_reported(self, capsys, files):
        event = files("e.yaml", "kind: merge_request\nlabels: [sparkles]\n")
        doc = yaml.safe_load(run(["trigger", "--event", event], capsys)[1])
        assert doc["warnings"] == ["ignored label 'sparkles'"]

    def test_daily_end_to_end_pass(self, capsys, files, tmp_path):
        hist = tmp_path / "h.jsonl"
        code, out, _ = run(["trigger", "--event", files("e.yaml", DAILY), "--run", "--history", str(hist)], capsys)
        report = yaml.safe_load(out)
        assert code == 0 and report["verdict"] == "pass" and report["trigger"] == "Daily"
        assert [st["stage"] for st in report["stages"]] == ["lint", "simulation", "bitstream", "fpga_test"]
        assert len(read_history(hist)) == 1

    def test_daily_end_to_end_fail(self, capsys, files):
        code, out, _ = run(["trigger", "--event", files("e.yaml", DAILY), "--run", "--fail-rate", "1"], capsys)
        assert code == 1 and yaml.safe_load(out)["verdict"] == "fail"

    def test_none_trigger(self, capsys, files):
        code, out, _ = run(["trigger", "--event", files("e.yaml", "kind: manual\n"), "--run"], capsys)
        assert code == 0 and yaml.safe_load(out) == {"trigger": "None", "jobs": []}

    def test_bad_event_exits_2(self, capsys, files):
        code, _, err = run(["trigger", "--event", files("e.yaml", "kind: schedule\n")], capsys)
        assert code == 2 and "schedule_name" in err

    def test_stability_end_to_end(self):
        event = "kind: manual\nvariables: {stability_test: 1}\npinned_sha: deadbeef\n"
        code, kind, jobs, report = end_to_end(event)
        assert code == 0 and kind.value == "Stability"
        assert {s.suite: s.total for s in report.suites}["linux-boot"] == 8

    def test_weekly_runs_three_campaigns(self):
        code, _, jobs, report = end_to_end("kind: merge_request\nlabels: [weekly]\n")
        assert code == 0 and len(jobs) == 3
        assert sum("campaign verdict" in n for n in report.notes) == 2


class TestHistoryCommand:
    def test_env_var(self, capsys, tmp_path, monkeypatch, files):
        hist = tmp_path / "h.jsonl"
        monkeypatch.setenv("FLEETREG_HISTORY", str(hist))
        assert run(["trigger", "--event", files("e.yaml", DAILY), "--run"], capsys)[0] == 0
        code, out, _ = run(["history", "--window", "3w"], capsys)
        doc = yaml.safe_load(out)
        assert code == 0 and doc["pipeline_count"] == 1 and doc["window_days"] == 21.0

    def test_no_store_exits_2(self, capsys, monkeypatch):
        monkeypatch.delenv("FLEETREG_HISTORY", raising=False)
        assert run(["history"], capsys)[0] == 2

    def test_bad_window_exits_2(self, capsys, tmp_path):
        assert run(["history", "--history", str(tmp_path / "h"), "--window", "soon"], capsys)[0] == 2


class TestReplayTable1:
    def test_eight(self, capsys, tmp_path):
        code, out, _ = run(["replay-table1", "--trace", str(tmp_path / "t.yaml")], capsys)
        report = yaml.safe_load(out)
        assert code == 0 and report["campaign_wall_time"] == 3169.6
        assert (tmp_path / "t.yaml").exists()

    def test_one(self, capsys):
        report = yaml.safe_load(run(["replay-table1", "--devices", "1"], capsys)[1])
        assert report["campaign_wall_time"] == 18962
        assert any("18754" in n for n in report["notes"])
