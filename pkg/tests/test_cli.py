import json

from adaptsec.cli import main
from adaptsec.monitor import Event, write_event_log
from adaptsec.problems import fixture_path


def test_check_model_accepts_the_shipped_fixture(capsys):
    assert main(["check-model", str(fixture_path("smart_home.goals"))]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["ok"] and payload["root"] == "root"
    assert payload["assumptions"] == 5


def test_check_model_rejects_garbage(tmp_path, capsys):
    bad = tmp_path / "bad.goals"
    bad.write_text('goal root "No refinement keyword"\n', encoding="utf-8")
    assert main(["check-model", str(bad)]) == 1
    assert "invalid" in capsys.readouterr().err


def test_oracle_dumps_enumeration(capsys):
    assert main(["oracle", "untrusted_device", "--horizon", "4", "--filter", "violating"]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.strip()]
    assert len(lines) == 1
    trace = json.loads(lines[0])
    assert trace["verdict"] == "violating"
    assert [a["name"] for a in trace["actions"]] == ["exit", "close", "open", "enter"]


def test_oracle_empty_when_locked(capsys):
    assert main(["oracle", "locked_home", "--filter", "violating"]) == 0
    assert capsys.readouterr().out.strip() == ""


def test_replay_prints_anomalies(tmp_path, capsys):
    log = tmp_path / "events.jsonl"
    write_event_log(log, [
        Event("e1", 5, "device_connected", "mystery", {"type": "imp"}),
        Event("e2", 9, "device_connected", "mystery", {}),
    ])
    assert main(["replay", str(log)]) == 0
    lines = [json.loads(l) for l in capsys.readouterr().out.splitlines() if l.strip()]
    assert [a["kind"] for a in lines] == ["new_device"]


def test_run_headless_writes_report(tmp_path, capsys):
    out = tmp_path / "report.json"
    code = main(["run", "untrusted_device", "--policy", "untrusted_device",
                 "--report", str(out)])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["passed"] is True
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["scenario"] == "untrusted-device"
    assert report["quiescent"]
