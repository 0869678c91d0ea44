"""Discrete-event smart-home simulator and scenario runner.

A scenario scripts the world (device connections, tenant movements, latency
injections) on a minute-granularity clock.  The harness feeds the resulting
events to the monitor, routes anomalies into the control loop, answers the
loop's questions from a scripted human policy (headless mode), and applies
enacted controls back to the simulated world.  Identical (scenario, policy,
seed) inputs produce a byte-identical run report.
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field

from . import engine, problems
from . import expr as ex
from .config import AdaptsecConfig
from .domain import Action, Entity, State, parse_action
from .errors import ScenarioError
from .monitor import Event, Monitor
from .orchestrator import Orchestrator, load_vulnerabilities
from .problems import fixture_path


@dataclass(frozen=True)
class Directive:
    at: int
    do: str  # connect | disconnect | world_action | latency | probe_burst
    payload: dict


@dataclass
class Scenario:
    name: str
    devices: list[dict]
    script: list[Directive]
    positive_suite: list[list[str]]
    expected_outcomes: list[str]
    seed: int = 7

    @staticmethod
    def from_dict(payload: dict) -> "Scenario":
        script = [
            Directive(entry["at"], entry["do"],
                      {k: v for k, v in entry.items() if k not in ("at", "do")})
            for entry in payload.get("script", [])
        ]
        scenario = Scenario(
            name=payload["name"],
            devices=payload.get("devices", []),
            script=script,
            positive_suite=payload.get("positive_suite", []),
            expected_outcomes=payload.get("expected_outcomes", []),
            seed=payload.get("seed", 7),
        )
        scenario.validate()
        return scenario

    def validate(self) -> None:
        times = [d.at for d in self.script]
        if times != sorted(times):
            raise ScenarioError(f"scenario {self.name}: script timestamps must be non-decreasing")
        known = {d["name"] for d in self.devices} | {"tenant", "outsider", "sl", "home"}
        for directive in self.script:
            device = directive.payload.get("device")
            if device is not None and device not in known:
                raise ScenarioError(f"scenario {self.name}: directive references unknown device {device!r}")


@dataclass
class HumanPolicy:
    """Scripted answers keyed by question key (exact ``device_trust:d1`` or
    class ``device_trust``), each with an optional delivery delay."""

    entries: dict = field(default_factory=dict)

    @staticmethod
    def from_dict(payload: dict) -> "HumanPolicy":
        entries = {}
        for key, value in payload.items():
            if not isinstance(value, dict) or "answer" not in value:
                value = {"answer": value}
            entries[key] = {"answer": value["answer"], "delay": value.get("delay", 0)}
        return HumanPolicy(entries)

    def lookup(self, key: str, key_class: str) -> dict | None:
        return self.entries.get(key) or self.entries.get(key_class)


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return Scenario.from_dict(json.load(fh))


def load_policy(path) -> HumanPolicy:
    with open(path, "r", encoding="utf-8") as fh:
        return HumanPolicy.from_dict(json.load(fh))


class _WorldPort:
    """Orchestrator-facing view of the simulated world."""

    def __init__(self, harness: "SimHarness"):
        self._harness = harness

    def current_state(self) -> State:
        return self._harness.world_state

    def quarantine(self, devices) -> None:
        self._harness.apply_quarantine(tuple(devices))


class SimHarness:
    """Lockstep simulator: the clock, the world state, the monitor, and the
    control loop advance together through one ordered queue."""

    def __init__(self, scenario: Scenario, policy: HumanPolicy | None = None,
                 config: AdaptsecConfig | None = None, seed: int | None = None,
                 subscriber=None, audit_sink=None):
        self.scenario = scenario
        self.policy = policy
        self.config = config or AdaptsecConfig()
        self.seed = scenario.seed if seed is None else seed
        self.rng = random.Random(self.seed)
        self.subscriber = subscriber
        self.now = 0
        self.events: list[Event] = []
        self.anomaly_log: list[dict] = []
        self.refused: list[dict] = []
        self._event_seq = 0
        self._queue: list[tuple[int, int, str, object]] = []
        self._queue_seq = 0

        domain = problems.base_domain()
        for spec in scenario.devices:
            domain = domain.with_entity(
                Entity(spec["name"], spec.get("kind", "net_device"), spec.get("trust", "unknown"))
            )
        model = problems.base_goal_model()
        self.world_state: State = domain.initial_state()
        self.monitor = Monitor(self.config)
        self.orchestrator = Orchestrator(
            model, domain, self.config,
            vulnerabilities=load_vulnerabilities(fixture_path("vulnerabilities.json")),
            bus=self._on_message,
            audit_sink=audit_sink,
            world=_WorldPort(self),
        )
        self._load_positive_suite()
        for directive in scenario.script:
            self._push(directive.at, "directive", directive)

    # -- plumbing -----------------------------------------------------------

    def _push(self, at: int, kind: str, payload) -> None:
        self._queue_seq += 1
        heapq.heappush(self._queue, (at, self._queue_seq, kind, payload))

    def _on_message(self, entry: dict) -> None:
        if entry["type"] == "anomaly":
            self.anomaly_log.append(entry["anomaly"])
        if entry["type"] == "intervention" and self.policy is not None:
            iv = entry["intervention"]
            scripted = self.policy.lookup(iv["key"], iv["key"].split(":", 1)[0])
            if scripted is not None:
                self._push(self.now + scripted["delay"], "answer",
                           (iv["id"], scripted["answer"]))
        if self.subscriber is not None:
            self.subscriber(entry)

    def _next_event_id(self) -> str:
        self._event_seq += 1
        return f"ev-{self._event_seq:04d}"

    def _load_positive_suite(self) -> None:
        problem = self.orchestrator.current_problem(label="positive-suite")
        for actions_text in self.scenario.positive_suite:
            actions = [parse_action(a) for a in actions_text]
            try:
                trace = engine.check_trace(problem, actions)
            except Exception as err:
                raise ScenarioError(
                    f"positive trace {actions_text} does not replay: {err}"
                ) from err
            if trace.verdict != "satisfying":
                raise ScenarioError(f"positive trace {actions_text} violates the requirement")
            self.orchestrator.positives.append(trace)
            self.orchestrator.traces[trace.id] = trace

    # -- world ---------------------------------------------------------------

    def _emit(self, kind: str, subject: str, attrs: dict) -> None:
        event = Event(self._next_event_id(), self.now, kind, subject, attrs)
        self.events.append(event)
        self.orchestrator.submit_event(event.to_dict())
        for anomaly in self.monitor.ingest(event):
            self.orchestrator.submit_anomaly(anomaly)

    def _enacted_controls_problem(self) -> engine.SearchProblem:
        model = self.orchestrator.model
        return engine.SearchProblem(
            domain=self.orchestrator.domain,
            requirement=ex.Never(ex.Lit("false_", ())),
            controls=model.enacted_control_exprs(),
            horizon=1,
            init=self.world_state,
        )

    def perform_world_action(self, action: Action) -> bool:
        """Apply a world action unless an enacted control forbids it."""
        domain = self.orchestrator.domain
        compiled = engine.compile_problem(self._enacted_controls_problem())
        schema = domain.schema_for(action)
        binding = {var: arg for (var, _), arg in zip(schema.params, action.args)}
        state = State(self.world_state.time, self.world_state.facts)
        if not engine.action_allowed(compiled, state, action, schema.precondition, binding, None):
            self.refused.append({"at": self.now, "action": str(action), "reason": "refused"})
            return False
        before = self.world_state.facts
        self.world_state = domain.step(state, action)
        self._emit_world_events(action, before, self.world_state.facts)
        return True

    def _emit_world_events(self, action: Action, before: frozenset, after: frozenset) -> None:
        lock_changes = {f for f in after ^ before if f[0] in ("locked", "unlocked")}
        if action.name in ("open", "close") and len(action.args) == 2:
            self._emit("command", action.args[0],
                       {"command": action.name, "target": action.args[1]})
        if lock_changes:
            status = "locked" if ("locked", "sl") in after else "unlocked"
            self._emit("door_state", "sl", {"state": status, "cause": str(action)})
        elif action.name in ("enter", "exit"):
            self._emit("door_state", "sl",
                       {"state": "locked" if ("locked", "sl") in after else "unlocked",
                        "passage": action.name, "agent": action.args[0]})

    def apply_quarantine(self, devices: tuple[str, ...]) -> None:
        for device in devices:
            if ("connected", device) in self.world_state.facts:
                facts = set(self.world_state.facts)
                facts.discard(("connected", device))
                self.world_state = self.world_state.with_facts(facts)
                self._emit("device_disconnected", device, {"cause": "quarantine"})

    # -- directives -------------------------------------------------------------

    def _apply_directive(self, directive: Directive) -> None:
        payload = directive.payload
        if directive.do == "connect":
            device = payload["device"]
            if ("connected", device) not in self.world_state.facts:
                self.world_state = self.world_state.with_facts(
                    set(self.world_state.facts) | {("connected", device)}
                )
            attrs = payload.get("attrs", {})
            if not attrs:
                attrs = next((d.get("attrs", {}) for d in self.scenario.devices
                              if d["name"] == device), {})
            self._emit("device_connected", device, attrs)
        elif directive.do == "disconnect":
            device = payload["device"]
            facts = {f for f in self.world_state.facts if f != ("connected", device)}
            self.world_state = self.world_state.with_facts(facts)
            self._emit("device_disconnected", device, {})
        elif directive.do == "world_action":
            self.perform_world_action(parse_action(payload["action"]))
        elif directive.do == "latency":
            self._emit("latency_sample", payload["device"],
                       {"latency_ms": float(payload["ms"])})
        elif directive.do == "probe_burst":
            base = float(payload["base_ms"])
            jitter = float(payload.get("jitter_ms", 0))
            for i in range(int(payload["count"])):
                ms = round(base + self.rng.uniform(-jitter, jitter), 2) if jitter else base
                self._push(directive.at + i, "sample", (payload["device"], ms))
        else:
            raise ScenarioError(f"unknown directive {directive.do!r}")

    # -- run ---------------------------------------------------------------------

    def advance(self, to: int | None = None) -> None:
        """Deliver every queued item with time <= ``to`` (all of them when None)."""
        if to is not None and to < self.now:
            raise ScenarioError(f"cannot advance backwards to {to} (now {self.now})")
        while self._queue and (to is None or self._queue[0][0] <= to):
            at, _, kind, payload = heapq.heappop(self._queue)
            self.now = max(self.now, at)
            self.orchestrator.set_time(self.now)
            if kind == "directive":
                self._apply_directive(payload)
            elif kind == "sample":
                device, ms = payload
                self._emit("latency_sample", device, {"latency_ms": ms})
            elif kind == "answer":
                iv_id, answer = payload
                request = self.orchestrator.interventions.get(iv_id)
                if request is not None and request.state == "pending":
                    self.orchestrator.answer_intervention(iv_id, answer)
        if to is not None:
            self.now = max(self.now, to)
            self.orchestrator.set_time(self.now)

    def inject(self, event: Event) -> None:
        """Deliver one externally built event right now."""
        if event.time < self.now:
            raise ScenarioError(f"event time {event.time} regresses (now {self.now})")
        self.now = event.time
        self.orchestrator.set_time(self.now)
        self.events.append(event)
        self.orchestrator.submit_event(event.to_dict())
        for anomaly in self.monitor.ingest(event):
            self.orchestrator.submit_anomaly(anomaly)

    def run(self) -> dict:
        self.advance(None)
        orch = self.orchestrator
        pending = [iv.key for iv in orch.interventions.values() if iv.state == "pending"]
        if pending and self.policy is not None:
            raise ScenarioError(f"headless run blocked on unanswered interventions: {pending}")
        outcomes = {name: self._check_outcome(name) for name in self.scenario.expected_outcomes}
        report = {
            "scenario": self.scenario.name,
            "seed": self.seed,
            "events": [e.to_dict() for e in self.events],
            "anomalies": list(self.anomaly_log),
            "audit": list(orch.audit),
            "refused": list(self.refused),
            "interventions": [iv.to_dict() for iv in orch.interventions.values()],
            "model_version": orch.model.version,
            "evolution_records": [r.__dict__ for r in orch.model.history],
            "enacted_controls": [
                {"id": cid, "constraint": str(c.constraint), "sustainability": c.sustainability}
                for cid, c in sorted(orch.model.controls.items()) if c.enacted
            ],
            "world_facts": sorted("%s(%s)" % (f[0], ",".join(f[1:])) for f in self.world_state.facts),
            "quiescent": orch.quiescent,
            "outcomes": outcomes,
            "passed": all(outcomes.values()) if outcomes else True,
        }
        return report

    # -- outcome checklist ---------------------------------------------------------

    def _check_outcome(self, spec: str) -> bool:
        orch = self.orchestrator
        head, _, rest = spec.partition(":")
        if head == "anomaly":
            return any(a["kind"] == rest for a in self.anomaly_log)
        if head == "anomaly_count":
            kind, _, count = rest.partition(":")
            return sum(1 for a in self.anomaly_log if a["kind"] == kind) == int(count)
        if head == "trace":
            want = [str(parse_action(a)) for a in _split_actions(rest)]
            for entry in orch.audit:
                trace = entry.get("trace")
                if trace and [f"{a['name']}({','.join(a['args'])})" for a in trace["actions"]] == want:
                    return True
            return False
        if head == "control_enacted":
            return any(rest in str(c.constraint) for c in orch.model.controls.values() if c.enacted)
        if head == "no_control_blocks":
            action = parse_action(rest)
            problem = orch.current_problem()
            for constraint in orch.model.enacted_control_exprs():
                parts = constraint.items if isinstance(constraint, ex.And) else (constraint,)
                for part in parts:
                    if isinstance(part, ex.Forbid):
                        from .learner import ground_forbidden_actions
                        if any(a == action for a, _ in ground_forbidden_actions(problem, part)):
                            return False
            return True
        if head == "quiescent":
            return orch.quiescent
        if head == "no_violation":
            return engine.find_violating_trace(orch.current_problem()) is None
        if head == "model_param":
            aid, _, tail = rest.partition(":")
            param, _, value = tail.partition(":")
            return str(orch.model.assumptions[aid].params.get(param)) == value
        if head == "evolution_record":
            return any(r.assumption_id == rest for r in orch.model.history)
        if head == "patch_applied":
            return any(p.root_cause and p.root_cause.kind == "patch"
                       and p.root_cause.cve_id == rest and p.root_cause.applied
                       for p in orch.plans.values())
        if head == "intervention_answered":
            return any(iv.key_class == rest and iv.state == "answered"
                       for iv in orch.interventions.values())
        raise ScenarioError(f"unknown expected outcome {spec!r}")


def _split_actions(text: str) -> list[str]:
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    parts.append(text[start:])
    return [p for p in parts if p.strip()]


def run_scenario(scenario: Scenario, policy: HumanPolicy | None,
                 config: AdaptsecConfig | None = None, seed: int | None = None) -> dict:
    return SimHarness(scenario, policy, config=config, seed=seed).run()


def serialize_report(report: dict) -> str:
    return json.dumps(report, separators=(",", ":"))
