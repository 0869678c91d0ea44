import pytest

from adaptsec import sim
from adaptsec.domain import Action
from adaptsec.errors import ScenarioError
from adaptsec.monitor import Event
from adaptsec.problems import fixture_path


def load(name):
    scenario = sim.load_scenario(fixture_path(f"scenarios/{name}.json"))
    policy = sim.load_policy(fixture_path(f"policies/{name}.json"))
    return scenario, policy


def test_untrusted_device_end_to_end():
    scenario, policy = load("untrusted_device")
    report = sim.run_scenario(scenario, policy)
    assert report["passed"], report["outcomes"]
    assert report["quiescent"]
    assert any(c["constraint"] == "forbid open(X, sl) when X == d1"
               for c in report["enacted_controls"])


def test_world_refuses_forbidden_commands_after_enactment():
    scenario, policy = load("untrusted_device")
    harness = sim.SimHarness(scenario, policy)
    harness.run()
    assert not harness.perform_world_action(Action("open", ("d1", "sl")))
    assert harness.refused[-1]["action"] == "open(d1,sl)"
    # the tenant's own handle still works: lock first, then unlock from inside
    assert harness.perform_world_action(Action("close", ("sl",)))
    assert harness.perform_world_action(Action("open", ("sl",)))


def test_empty_script_produces_no_anomalies():
    scenario = sim.Scenario(name="idle", devices=[], script=[], positive_suite=[],
                            expected_outcomes=[])
    report = sim.SimHarness(scenario, sim.HumanPolicy()).run()
    assert report["anomalies"] == []
    assert report["events"] == []
    assert report["quiescent"]


def test_script_order_breaks_timestamp_ties():
    scenario = sim.Scenario(
        name="ties",
        devices=[{"name": "x1", "trust": "trusted"}, {"name": "x2", "trust": "trusted"}],
        script=[
            sim.Directive(5, "connect", {"device": "x1"}),
            sim.Directive(5, "connect", {"device": "x2"}),
        ],
        positive_suite=[], expected_outcomes=[],
    )
    report = sim.SimHarness(scenario, sim.HumanPolicy()).run()
    connects = [e for e in report["events"] if e["kind"] == "device_connected"]
    assert [e["subject"] for e in connects] == ["x1", "x2"]
    assert all(e["time"] == 5 for e in connects)


def test_scenario_with_decreasing_timestamps_rejected():
    with pytest.raises(ScenarioError):
        sim.Scenario.from_dict({
            "name": "bad",
            "script": [{"at": 10, "do": "connect", "device": "d"},
                       {"at": 5, "do": "connect", "device": "d"}],
            "devices": [{"name": "d"}],
        })


def test_unknown_directive_device_rejected():
    with pytest.raises(ScenarioError):
        sim.Scenario.from_dict({
            "name": "bad", "devices": [],
            "script": [{"at": 1, "do": "connect", "device": "ghost"}],
        })


def test_headless_run_fails_on_unanswered_question():
    scenario, _ = load("untrusted_device")
    with pytest.raises(ScenarioError):
        sim.SimHarness(scenario, sim.HumanPolicy()).run()  # empty policy, blocking question


def test_interactive_mode_leaves_questions_pending():
    scenario, _ = load("untrusted_device")
    harness = sim.SimHarness(scenario, policy=None)
    harness.advance(None)
    orch = harness.orchestrator
    assert [iv.key for iv in orch.interventions.values() if iv.state == "pending"] \
        == ["device_trust:d1"]


def test_advance_backwards_and_event_regression_rejected():
    scenario, _ = load("untrusted_device")
    harness = sim.SimHarness(scenario, policy=None)
    harness.advance(50)
    with pytest.raises(ScenarioError):
        harness.advance(10)
    with pytest.raises(ScenarioError):
        harness.inject(Event("late", 5, "latency_sample", "sl", {"latency_ms": 9.0}))


def test_probe_jitter_depends_only_on_seed():
    scenario, policy = load("mitm_cve")
    one = sim.run_scenario(scenario, policy, seed=11)
    two = sim.run_scenario(scenario, policy, seed=11)
    other = sim.run_scenario(scenario, policy, seed=12)
    assert sim.serialize_report(one) == sim.serialize_report(two)
    samples_one = [e["attrs"]["latency_ms"] for e in one["events"] if e["kind"] == "latency_sample"]
    samples_other = [e["attrs"]["latency_ms"] for e in other["events"] if e["kind"] == "latency_sample"]
    assert samples_one != samples_other


def test_all_four_scenarios_run_quiescent_and_pass():
    for name in ("untrusted_device", "trusted_speaker", "frequent_devices", "mitm_cve"):
        scenario, policy = load(name)
        report = sim.run_scenario(scenario, policy)
        assert report["passed"], (name, report["outcomes"])
        assert report["quiescent"], name
        assert len(report["events"]) < 10_000


def test_latency_injection_after_warmup_triggers_spike():
    scenario, policy = load("mitm_cve")
    report = sim.run_scenario(scenario, policy)
    kinds = [a["kind"] for a in report["anomalies"]]
    assert "latency_spike" in kinds
    spike = next(a for a in report["anomalies"] if a["kind"] == "latency_spike")
    assert spike["tags"] == ["sl"]
    assert spike["payload"]["latency_ms"] == 60.0
