"""The control loop: route anomalies through diagnosis, mitigation planning,
and enactment, asking a human whenever the loop cannot decide alone.

Every question carries a structured explanation (what was observed, why the
step is needed, plus task-completion and modification guidance where the
role needs them), and every decision lands in an append-only audit trail
whose sequence numbers also drive the live message stream.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace

from . import expr as ex
from .config import AdaptsecConfig
from .domain import Action, ActionDomain, State
from .engine import SearchProblem, Trace, check_trace, find_violating_trace, trace_to_dict
from .errors import (
    AnswerSchemaError,
    InterventionRequiredError,
    InterventionStateError,
    NonEnactableControlError,
)
from .goal_model import GoalModel, SecurityControl, add_control, evolve_assumption
from .learner import (
    ControlCandidate,
    classify_sustainability,
    evaluate_candidate,
    ground_forbidden_actions,
    learn_control,
)
from .monitor import Anomaly

ROLE_TENANT = "tenant"
ROLE_ENGINEER = "engineer"


# --- interventions ---------------------------------------------------------


@dataclass
class Explanation:
    observability: str
    transparency: str
    feedforward: str | None = None
    intelligibility: str | None = None

    def to_dict(self) -> dict:
        return {
            "observability": self.observability,
            "transparency": self.transparency,
            "feedforward": self.feedforward,
            "intelligibility": self.intelligibility,
        }


@dataclass
class InterventionRequest:
    id: str
    role: str
    key: str  # question key, e.g. "device_trust:d1"
    question: str
    answer_schema: dict
    explanation: Explanation
    created_at: int
    context: dict = field(default_factory=dict)
    state: str = "pending"  # pending | answered | expired
    answer: object = None
    answered_at: int | None = None

    @property
    def key_class(self) -> str:
        return self.key.split(":", 1)[0]

    def to_dict(self) -> dict:
        return {
            "id": self.id, "role": self.role, "key": self.key,
            "question": self.question, "answer_schema": self.answer_schema,
            "explanation": self.explanation.to_dict(), "created_at": self.created_at,
            "context": self.context, "state": self.state, "answer": self.answer,
            "answered_at": self.answered_at,
        }


def validate_explanation(request: InterventionRequest) -> None:
    """Field-presence rules for the four explanation properties."""
    explanation = request.explanation
    if not explanation.observability or not explanation.transparency:
        raise ValueError(f"intervention {request.id} lacks observability/transparency text")
    about_device = request.context.get("device") is not None
    if (request.role == ROLE_TENANT and request.answer_schema.get("type") == "boolean"
            and about_device and not explanation.feedforward):
        raise ValueError(f"intervention {request.id} needs feedforward details about the device")
    if (request.role == ROLE_ENGINEER and request.context.get("task") == "control_modification"
            and not explanation.intelligibility):
        raise ValueError(f"intervention {request.id} needs intelligibility guidance")


def validate_answer(schema: dict, answer) -> None:
    kind = schema.get("type")
    if kind == "boolean":
        if not isinstance(answer, bool):
            raise AnswerSchemaError(f"expected a boolean, got {answer!r}")
    elif kind == "integer":
        if isinstance(answer, bool) or not isinstance(answer, int):
            raise AnswerSchemaError(f"expected an integer, got {answer!r}")
        lo, hi = schema.get("min"), schema.get("max")
        if (lo is not None and answer < lo) or (hi is not None and answer > hi):
            raise AnswerSchemaError(f"{answer} outside [{lo}, {hi}]")
    elif kind == "choice":
        if answer not in schema.get("options", []):
            raise AnswerSchemaError(f"{answer!r} is not one of the offered options")
    elif kind == "acknowledgement":
        if answer is not True:
            raise AnswerSchemaError("acknowledgement requires answer true")
    elif kind == "text":
        if not isinstance(answer, str) or not answer.strip():
            raise AnswerSchemaError("expected non-empty text")
    else:
        raise AnswerSchemaError(f"unknown answer schema {kind!r}")


# --- plans -----------------------------------------------------------------


@dataclass
class RootCauseTask:
    kind: str  # assumption_evolution | patch | advice
    assumption_id: str | None = None
    param: str | None = None
    cve_id: str | None = None
    device: str | None = None
    fix: str | None = None
    applied: bool = False

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "assumption_id": self.assumption_id, "param": self.param,
            "cve_id": self.cve_id, "device": self.device, "fix": self.fix,
            "applied": self.applied,
        }


@dataclass
class Plan:
    id: str
    anomaly_id: str
    outcome_kind: str
    short_term: ControlCandidate | None = None
    root_cause: RootCauseTask | None = None
    interventions: list[str] = field(default_factory=list)
    witness_trace_id: str | None = None
    status: str = "waiting"  # waiting | executed | rejected
    report: dict | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id, "anomaly_id": self.anomaly_id, "outcome_kind": self.outcome_kind,
            "short_term": None if self.short_term is None else {
                "constraint": self.short_term.text,
                "sustainability": self.short_term.sustainability,
                "eliminates": sorted(self.short_term.eliminates),
                "breaks": sorted(self.short_term.breaks),
                "quarantines": list(self.short_term.quarantines),
            },
            "root_cause": None if self.root_cause is None else self.root_cause.to_dict(),
            "interventions": list(self.interventions),
            "witness_trace_id": self.witness_trace_id,
            "status": self.status,
        }


@dataclass
class AnalysisOutcome:
    kind: str  # need_fact | threat_confirmed | assumption_suspect | benign
    anomaly: Anomaly
    trace: Trace | None = None
    intervention_id: str | None = None
    dropped_assumptions: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "anomaly_id": self.anomaly.id,
            "trace_id": None if self.trace is None else self.trace.id,
            "intervention_id": self.intervention_id,
            "dropped_assumptions": list(self.dropped_assumptions),
        }


@dataclass
class LoopResumption:
    intervention_id: str
    key: str
    answer: object
    resumed: str
    quiescent: bool

    def to_dict(self) -> dict:
        return {
            "intervention_id": self.intervention_id, "key": self.key,
            "answer": self.answer, "resumed": self.resumed, "quiescent": self.quiescent,
        }


@dataclass(frozen=True)
class VulnerabilityRecord:
    cve_id: str
    device: str
    description: str
    fix: str | None = None
    disclosed: bool = True


def load_vulnerabilities(path) -> list[VulnerabilityRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        return [VulnerabilityRecord(**entry) for entry in json.load(fh)]


# --- the loop ---------------------------------------------------------------


class Orchestrator:
    """Single logical thread: all inputs (anomalies, answers, clock moves)
    are serialized through one work queue."""

    def __init__(self, model: GoalModel, domain: ActionDomain,
                 config: AdaptsecConfig | None = None,
                 positives: list[Trace] | None = None,
                 vulnerabilities: list[VulnerabilityRecord] | None = None,
                 bus=None, audit_sink=None, world=None):
        self.config = config or AdaptsecConfig()
        self.model_versions: list[GoalModel] = [model]
        self.domain = domain
        self.positives: list[Trace] = list(positives or [])
        self.vulnerabilities = list(vulnerabilities or [])
        self.bus = bus
        self.audit_sink = audit_sink
        self.world = world
        self.now = 0
        self.anomalies: dict[str, Anomaly] = {}
        self.anomaly_status: dict[str, str] = {}  # open | closed | rejected
        self.interventions: dict[str, InterventionRequest] = {}
        self.plans: dict[str, Plan] = {}
        self.traces: dict[str, Trace] = {}
        self.audit: list[dict] = []
        self.analyzed_counts: dict[str, int] = {}
        self._queue: deque = deque()
        self._suspended: dict[str, tuple] = {}  # intervention id -> work item
        self._seq = 0
        self._iv_seq = 0
        self._plan_seq = 0
        self._control_seq = 0

    # -- knowledge views ----------------------------------------------------

    @property
    def model(self) -> GoalModel:
        return self.model_versions[-1]

    def _push_model(self, model: GoalModel) -> None:
        self.model_versions.append(model)

    def world_state(self) -> State:
        if self.world is not None:
            snapshot = self.world.current_state()
            if snapshot is not None:
                return State(0, snapshot.facts)
        return self.domain.initial_state()

    def current_problem(self, drop_assumptions: tuple[str, ...] = (),
                        extra_controls: tuple[ex.Expr, ...] = (),
                        label: str = "") -> SearchProblem:
        requirement = self.model.requirement_expr()
        if not isinstance(requirement, ex.Never):
            requirement = ex.Never(requirement)
        return SearchProblem(
            domain=self.domain,
            requirement=requirement,
            assumptions=self.model.active_assumption_exprs(drop=drop_assumptions),
            controls=self.model.enacted_control_exprs() + tuple(extra_controls),
            horizon=self.config.horizon,
            init=self.world_state(),
            label=label,
        )

    # -- publishing -----------------------------------------------------------

    def publish(self, msg_type: str, payload: dict, audit: bool = True) -> dict:
        self._seq += 1
        entry = {"seq": self._seq, "at": self.now, "type": msg_type, **payload}
        if audit:
            self.audit.append(entry)
            if self.audit_sink is not None:
                self.audit_sink(entry)
        if self.bus is not None:
            self.bus(entry)
        return entry

    # -- inputs ---------------------------------------------------------------

    def set_time(self, minutes: int) -> None:
        self.now = max(self.now, minutes)
        self._expire_due()
        self.drain()

    def submit_event(self, event_dict: dict) -> None:
        """Events only feed the stream; anomalies drive the loop."""
        self.publish("event", {"event": event_dict}, audit=False)

    def submit_anomaly(self, anomaly: Anomaly) -> None:
        self.anomalies[anomaly.id] = anomaly
        self.anomaly_status[anomaly.id] = "open"
        self.publish("anomaly", {"anomaly": anomaly.to_dict()})
        self._queue.append(("analyze", anomaly.id))
        self.drain()

    def drain(self) -> None:
        while self._queue:
            kind, payload = self._queue.popleft()
            if kind == "analyze":
                self._analyze(self.anomalies[payload])
            elif kind == "plan":
                self._plan(payload)
            elif kind == "execute":
                self._execute(self.plans[payload])

    @property
    def quiescent(self) -> bool:
        pending = any(iv.state == "pending" for iv in self.interventions.values())
        waiting = any(p.status == "waiting" for p in self.plans.values())
        return not self._queue and not pending and not waiting

    # -- analysis ---------------------------------------------------------------

    def _analyze(self, anomaly: Anomaly) -> AnalysisOutcome:
        self.analyzed_counts[anomaly.id] = self.analyzed_counts.get(anomaly.id, 0) + 1
        if anomaly.kind == "new_device":
            outcome = self._analyze_new_device(anomaly)
        elif anomaly.kind == "frequent_new_devices":
            outcome = self._analyze_by_search(anomaly)
        elif anomaly.kind == "latency_spike":
            outcome = self._analyze_latency(anomaly)
        else:
            outcome = AnalysisOutcome("benign", anomaly)
        if outcome.trace is not None:
            self.traces[outcome.trace.id] = outcome.trace
        self.publish("outcome", {"outcome": outcome.to_dict(),
                                 "trace": None if outcome.trace is None else trace_to_dict(outcome.trace)})
        if outcome.kind in ("threat_confirmed", "assumption_suspect"):
            self._queue.append(("plan", outcome))
        elif outcome.kind == "benign":
            self.anomaly_status[anomaly.id] = "closed"
        return outcome

    def _analyze_new_device(self, anomaly: Anomaly) -> AnalysisOutcome:
        device = anomaly.tags[0]
        entity = self.domain.entity(device)
        if entity is None or entity.trust == "unknown":
            request = self._ask(
                role=ROLE_TENANT,
                key=f"device_trust:{device}",
                question=f"Is the new device {device} yours (trusted)?",
                schema={"type": "boolean"},
                explanation=Explanation(
                    observability=f"A device named {device} joined the WiFi network and has not been seen before.",
                    transparency=(
                        "Marking it trusted grants it access to the network and home appliances; "
                        "marking it untrusted makes the system look for a way to contain it."
                    ),
                    feedforward=_device_details(anomaly),
                ),
                context={"anomaly_id": anomaly.id, "device": device},
                resume=("analyze", anomaly.id),
            )
            return AnalysisOutcome("need_fact", anomaly, intervention_id=request.id)
        return self._analyze_by_search(anomaly)

    def _analyze_by_search(self, anomaly: Anomaly) -> AnalysisOutcome:
        trace = find_violating_trace(self.current_problem(label=f"diagnosis:{anomaly.id}"))
        if trace is None:
            return AnalysisOutcome("benign", anomaly)
        return AnalysisOutcome("threat_confirmed", anomaly, trace=trace)

    def _analyze_latency(self, anomaly: Anomaly) -> AnalysisOutcome:
        # A latency spike casts doubt on the trusted-device assumption: drop
        # it hypothetically and see whether a trusted device could now let an
        # outsider in.
        trace = find_violating_trace(
            self.current_problem(drop_assumptions=("a",), label=f"hypothesis:{anomaly.id}")
        )
        if trace is None:
            return AnalysisOutcome("benign", anomaly)
        return AnalysisOutcome("assumption_suspect", anomaly, trace=trace,
                               dropped_assumptions=("a",))

    # -- planning ---------------------------------------------------------------

    def _plan(self, outcome: AnalysisOutcome) -> Plan:
        if outcome.kind not in ("threat_confirmed", "assumption_suspect"):
            raise ValueError(f"cannot plan for outcome {outcome.kind!r}")
        anomaly = outcome.anomaly
        self._plan_seq += 1
        plan = Plan(
            id=f"plan-{self._plan_seq:04d}",
            anomaly_id=anomaly.id,
            outcome_kind=outcome.kind,
            witness_trace_id=None if outcome.trace is None else outcome.trace.id,
        )
        self.plans[plan.id] = plan
        if outcome.kind == "assumption_suspect":
            self._plan_for_suspected_assumption(plan, outcome)
        elif anomaly.kind == "frequent_new_devices":
            self._plan_for_frequency(plan, outcome)
        else:
            self._plan_for_device_threat(plan, outcome)
        self.publish("plan", {"plan": plan.to_dict()})
        if not plan.interventions:
            self._queue.append(("execute", plan.id))
        return plan

    def _plan_for_device_threat(self, plan: Plan, outcome: AnalysisOutcome) -> None:
        anomaly = outcome.anomaly
        device = anomaly.tags[0]
        problem = self.current_problem(label=f"planning:{anomaly.id}")
        try:
            candidate = learn_control(problem, self.positives)
        except InterventionRequiredError as err:
            # Only actuatable rules are offered; the rest travel in the
            # context with their flags for the console to display.
            options = [c.text for c in err.candidates if c.enactable]
            self._ask(
                role=ROLE_ENGINEER,
                key=f"choose_control:{plan.id}",
                question="No learned control removes the threat without breaking normal use; pick one to enact.",
                schema={"type": "choice", "options": options},
                explanation=Explanation(
                    observability=f"Device {device} enables a sequence that ends with an outsider inside the home.",
                    transparency="Each option below blocks part of that sequence; the counts show what it removes and what it breaks.",
                    intelligibility=(
                        "Subject-specific rules (X == device) only constrain that device; kind- or "
                        "trust-guarded rules also constrain devices added later. Widening a guard never "
                        "re-opens the attack path, narrowing it may."
                    ),
                ),
                context={"anomaly_id": anomaly.id, "plan_id": plan.id,
                         "task": "control_modification",
                         "candidates": [
                             {"constraint": c.text, "eliminates": len(c.eliminates),
                              "breaks": len(c.breaks), "enactable": c.enactable}
                             for c in err.candidates
                         ]},
                resume=("plan_answer", plan.id),
                plan=plan,
            )
            return
        candidate = replace(candidate, sustainability=classify_sustainability(candidate, self.model, anomaly))
        plan.short_term = candidate
        self._request_enact_approval(plan, anomaly, candidate,
                                     transparency=(
                                         f"Blocking {device}'s lock commands prevents it from unlocking the "
                                         "door for an intruder while you are away; other network use is untouched."
                                     ))

    def _plan_for_frequency(self, plan: Plan, outcome: AnalysisOutcome) -> None:
        anomaly = outcome.anomaly
        new_devices = tuple(t for t in anomaly.tags if t != "wifi")
        quarantines = tuple(
            d for d in new_devices
            if (e := self.domain.entity(d)) is not None and e.trust != "trusted"
            and ("connected", d) in self.world_state().facts
        )
        candidate = ControlCandidate(
            constraint=ex.Forbid(ex.ActionPattern("connect", ("X",)),
                                 ex.Not(ex.Lit("trusted", ("X",)))),
            template="forbid-connect-by-default",
            specificity=1,
            enactable=True,
            tags=("wifi",),
            quarantines=quarantines,
        )
        problem = self.current_problem(label=f"planning:{anomaly.id}")
        candidate = evaluate_candidate(candidate, problem, self.positives)
        candidate = replace(candidate, sustainability=classify_sustainability(candidate, self.model, anomaly))
        plan.short_term = candidate
        self._ask(
            role=ROLE_TENANT,
            key="prevent_new_devices",
            question="Should new devices be denied WiFi access by default from now on?",
            schema={"type": "boolean"},
            explanation=Explanation(
                observability=(
                    f"{len(new_devices)} unfamiliar devices joined the WiFi network within "
                    f"{anomaly.payload.get('window_minutes', '?')} minutes: {', '.join(new_devices)}."
                ),
                transparency=(
                    "Default-deny quarantines the unverified devices now and means you must "
                    "grant access manually whenever a new device wants to join."
                ),
            ),
            context={"anomaly_id": anomaly.id, "plan_id": plan.id, "approves": "short_term"},
            resume=("plan_answer", plan.id),
            plan=plan,
        )
        current_min = self.model.assumptions["pw"].params["min_password_chars"]
        plan.root_cause = RootCauseTask(kind="assumption_evolution",
                                        assumption_id="pw", param="min_password_chars")
        evolution = classify_sustainability(
            _evolution_candidate_for("pw", anomaly), self.model, anomaly
        )
        self._ask(
            role=ROLE_ENGINEER,
            key="min_password_chars",
            question="Minimum number of characters for the WiFi password to count as strong?",
            schema={"type": "integer", "min": current_min + 1, "max": 128},
            explanation=Explanation(
                observability="Unfamiliar devices keep joining the WiFi network, which points at weak network authentication.",
                transparency=(
                    f"Raising the minimum above the current {current_min} characters evolves the password-strength "
                    f"assumption and forces a stronger credential to be enforced ({evolution} fix)."
                ),
            ),
            context={"anomaly_id": anomaly.id, "plan_id": plan.id, "root_cause": True},
            resume=("plan_answer", plan.id),
            plan=plan,
        )

    def _plan_for_suspected_assumption(self, plan: Plan, outcome: AnalysisOutcome) -> None:
        anomaly = outcome.anomaly
        device = anomaly.tags[0]
        block = ControlCandidate(
            constraint=ex.And((
                ex.Forbid(ex.ActionPattern("open", ("X", device)), ex.Lit("net_device", ("X",))),
                ex.Forbid(ex.ActionPattern("close", ("X", device)), ex.Lit("net_device", ("X",))),
            )),
            template="block-incoming-traffic",
            specificity=1,
            enactable=True,
            tags=(device,),
        )
        hypothetical = self.current_problem(drop_assumptions=outcome.dropped_assumptions,
                                            label=f"planning:{anomaly.id}")
        block = evaluate_candidate(block, hypothetical, self.positives)
        block = replace(block, sustainability=classify_sustainability(block, self.model, anomaly))
        plan.short_term = block
        self._request_enact_approval(
            plan, anomaly, block,
            transparency=(
                f"Blocking all network commands to {device} stops a possible interception attack from "
                "unlocking the door, but it also stops your own devices from operating the lock until a fix lands."
            ),
        )
        record = next((v for v in self.vulnerabilities if v.device == device and v.fix), None)
        if record is not None:
            plan.root_cause = RootCauseTask(kind="patch", cve_id=record.cve_id,
                                            device=device, fix=record.fix)
            self._ask(
                role=ROLE_ENGINEER,
                key=f"patch_ack:{record.cve_id}",
                question=f"Apply the published fix for {record.cve_id} to {device}?",
                schema={"type": "acknowledgement"},
                explanation=Explanation(
                    observability=(
                        f"Latency on the path to {device} rose far above its baseline, consistent with "
                        f"traffic interception; a disclosed weakness ({record.cve_id}) matches: {record.description}"
                    ),
                    transparency=(
                        "Applying the fix removes the interception opening, after which the temporary "
                        f"traffic block on {device} can be lifted. Fix: {record.fix}"
                    ),
                ),
                context={"anomaly_id": anomaly.id, "plan_id": plan.id,
                         "cve_id": record.cve_id, "root_cause": True},
                resume=("plan_answer", plan.id),
                plan=plan,
            )
        else:
            plan.root_cause = RootCauseTask(kind="advice", device=device)
            self._ask(
                role=ROLE_ENGINEER,
                key=f"vuln_advice:{device}",
                question=f"No disclosed fix covers {device}; how should this suspected weakness be handled?",
                schema={"type": "text"},
                explanation=Explanation(
                    observability=f"Latency to {device} rose far above baseline with no matching disclosure on file.",
                    transparency="Your guidance becomes the root-cause task; the traffic block stays on meanwhile.",
                ),
                context={"anomaly_id": anomaly.id, "plan_id": plan.id, "root_cause": True},
                resume=("plan_answer", plan.id),
                plan=plan,
            )

    def _request_enact_approval(self, plan: Plan, anomaly: Anomaly,
                                candidate: ControlCandidate, transparency: str) -> None:
        if self.config.auto_enact and not self._user_visible(candidate) and not candidate.breaks:
            self.publish("decision", {"auto_enact": candidate.text, "plan_id": plan.id})
            return
        observability = (
            f"The anomaly on {', '.join(t for t in anomaly.tags if t != 'wifi') or 'the network'} "
            "leads to a sequence in which an outsider ends up inside the home; "
            f"see trace {plan.witness_trace_id}."
        )
        self._ask(
            role=ROLE_TENANT,
            key=f"approve_control:{plan.id}",
            question=f"Enact this security control? {candidate.text}",
            schema={"type": "boolean"},
            explanation=Explanation(observability=observability, transparency=transparency),
            context={"anomaly_id": anomaly.id, "plan_id": plan.id, "approves": "short_term",
                     "trace_id": plan.witness_trace_id},
            resume=("plan_answer", plan.id),
            plan=plan,
        )

    def _user_visible(self, candidate: ControlCandidate) -> bool:
        """A control is user-visible when it quarantines devices or would
        constrain something the tenant trusts."""
        if candidate.quarantines or candidate.breaks:
            return True
        trusted = {e.name for e in self.domain.entities if e.trust == "trusted"}
        constraints = candidate.constraint.items if isinstance(candidate.constraint, ex.And) \
            else (candidate.constraint,)
        problem = self.current_problem()
        for constraint in constraints:
            if not isinstance(constraint, ex.Forbid):
                continue
            for action, _ in ground_forbidden_actions(problem, constraint):
                if action.args and action.args[0] in trusted:
                    return True
        return False

    # -- interventions ------------------------------------------------------------

    def _ask(self, role: str, key: str, question: str, schema: dict,
             explanation: Explanation, context: dict, resume: tuple,
             plan: Plan | None = None) -> InterventionRequest:
        self._iv_seq += 1
        request = InterventionRequest(
            id=f"iv-{self._iv_seq:04d}", role=role, key=key, question=question,
            answer_schema=schema, explanation=explanation, created_at=self.now,
            context=context,
        )
        validate_explanation(request)
        self.interventions[request.id] = request
        self._suspended[request.id] = resume
        if plan is not None:
            plan.interventions.append(request.id)
        self.publish("intervention", {"intervention": request.to_dict()})
        return request

    def answer_intervention(self, intervention_id: str, answer) -> LoopResumption:
        request = self.interventions.get(intervention_id)
        if request is None:
            raise InterventionStateError(f"unknown intervention {intervention_id!r}")
        if request.state != "pending":
            raise InterventionStateError(f"intervention {intervention_id} is {request.state}")
        validate_answer(request.answer_schema, answer)
        request.state = "answered"
        request.answer = answer
        request.answered_at = self.now
        self.publish("answer", {"intervention_id": request.id, "key": request.key,
                                "answer": answer})
        resume = self._suspended.pop(request.id, None)
        resumed = "none"
        if resume is not None:
            resumed = self._resume(resume, request)
        self.drain()
        return LoopResumption(request.id, request.key, answer, resumed, self.quiescent)

    def _resume(self, resume: tuple, request: InterventionRequest) -> str:
        kind, target = resume
        if kind == "analyze":
            if request.key_class == "device_trust":
                device = request.key.split(":", 1)[1]
                trust = "trusted" if request.answer else "untrusted"
                self.domain = self.domain.with_trust(device, trust)
                self.publish("decision", {"trust": {"device": device, "level": trust}})
                if trust == "trusted":
                    self._extend_positive_suite(device)
            self._queue.append(("analyze", target))
            return f"analysis of {target}"
        if kind == "plan_answer":
            plan = self.plans[target]
            if request.key_class == "choose_control":
                chosen = request.answer
                context = request.context.get("candidates", [])
                plan.short_term = self._candidate_from_choice(chosen, context)
            if all(self.interventions[iv].state == "answered" for iv in plan.interventions):
                self._queue.append(("execute", plan.id))
                return f"execution of {plan.id}"
            return f"{plan.id} still waiting on answers"
        return "none"

    def _candidate_from_choice(self, constraint_text: str, context: list[dict]) -> ControlCandidate:
        parsed = ex.parse_expr(constraint_text)
        if not isinstance(parsed, (ex.Forbid, ex.And)):
            raise AnswerSchemaError(f"chosen option {constraint_text!r} is not a forbid rule")
        meta = next((c for c in context if c["constraint"] == constraint_text), {})
        tags = tuple(str(a) for a in getattr(parsed, "pattern", ex.ActionPattern("x", ())).args
                     if not ex.is_var(a)) or ("wifi",)
        return ControlCandidate(
            constraint=parsed, template="engineer-choice", specificity=0,
            enactable=bool(meta.get("enactable", True)), tags=tags, evaluated=True,
        )

    def _extend_positive_suite(self, device: str) -> None:
        """A freshly trusted device earns a canonical usage routine in the
        positive suite so later learning will not cut it off."""
        routine = [
            Action("exit", ("tenant", "home")), Action("close", ("sl",)),
            Action("open", (device, "sl")), Action("enter", ("tenant", "home")),
        ]
        try:
            trace = check_trace(self.current_problem(), routine)
        except Exception:
            self.publish("decision", {"positive_suite": f"routine for {device} does not replay; skipped"})
            return
        if trace.verdict == "satisfying" and trace.id not in {t.id for t in self.positives}:
            self.positives.append(trace)
            self.traces[trace.id] = trace
            self.publish("decision", {"positive_suite": f"added routine {trace.id} for {device}"})

    def _expire_due(self) -> None:
        deadline = self.config.intervention_expiry_minutes
        for request in list(self.interventions.values()):
            if request.state == "pending" and self.now - request.created_at >= deadline:
                request.state = "expired"
                self.publish("decision", {"expired": request.id, "key": request.key})
                resume = self._suspended.pop(request.id, None)
                if resume is None:
                    continue
                kind, target = resume
                if kind == "analyze":
                    # Re-ask by re-running the analysis that raised the question.
                    self._queue.append(("analyze", target))
                elif kind == "plan_answer":
                    self._requeue_plan(self.plans[target])

    def _requeue_plan(self, plan: Plan) -> None:
        """Re-plan from the recorded outcome: fresh interventions, same diagnosis."""
        for iv_id in plan.interventions:
            request = self.interventions[iv_id]
            if request.state == "pending":
                request.state = "expired"
            self._suspended.pop(iv_id, None)
        plan.status = "rejected"
        anomaly = self.anomalies[plan.anomaly_id]
        self._queue.append(("analyze", anomaly.id))

    # -- execution ------------------------------------------------------------

    def _execute(self, plan: Plan) -> dict:
        pending = [iv for iv in plan.interventions if self.interventions[iv].state == "pending"]
        if pending:
            raise InterventionStateError(f"plan {plan.id} still waits on {pending}")
        effects: list[dict] = []
        rejected: list[dict] = []
        approval = self._plan_approval(plan)
        if plan.short_term is not None:
            if approval is False:
                rejected.append({"control": plan.short_term.text,
                                 "reason": "tenant declined enactment"})
                self.anomaly_status[plan.anomaly_id] = "rejected"
            else:
                effects.extend(self._enact(plan, plan.short_term))
        effects.extend(self._apply_root_cause(plan))
        plan.status = "rejected" if (approval is False and plan.root_cause is None) else "executed"
        if self.anomaly_status.get(plan.anomaly_id) == "open":
            self.anomaly_status[plan.anomaly_id] = "closed"
        report = {"plan_id": plan.id, "effects": effects, "rejected": rejected,
                  "model_version": self.model.version}
        plan.report = report
        self.publish("execution", {"execution": report})
        return report

    def _plan_approval(self, plan: Plan) -> bool | None:
        for iv_id in plan.interventions:
            request = self.interventions[iv_id]
            if request.context.get("approves") == "short_term":
                return bool(request.answer)
            if request.key_class == "choose_control":
                return True
        return None  # auto-enact path or no approval needed

    def _enact(self, plan: Plan, candidate: ControlCandidate) -> list[dict]:
        if not candidate.enactable:
            raise NonEnactableControlError(
                f"no actuator can enforce {candidate.text}; it cannot be enacted"
            )
        effects: list[dict] = []
        self._control_seq += 1
        control = SecurityControl(
            id=f"lc-{self._control_seq:02d}",
            constraint=candidate.constraint,
            origin="learned",
            sustainability=candidate.sustainability,
            enacted=True,
            rationale=f"mitigates anomaly {plan.anomaly_id} (plan {plan.id})",
            learned_from=(plan.witness_trace_id,) if plan.witness_trace_id else (),
        )
        self._push_model(add_control(self.model, control, tags=candidate.tags))
        effects.append({"enacted_control": control.id, "constraint": candidate.text,
                        "sustainability": candidate.sustainability})
        if candidate.quarantines:
            if self.world is not None:
                self.world.quarantine(candidate.quarantines)
            # Keep the fallback world view coherent when no simulator is attached.
            self.domain = self.domain.with_init(
                f for f in self.domain.init_facts
                if not (f[0] == "connected" and f[1] in candidate.quarantines)
            )
            effects.append({"quarantined": list(candidate.quarantines)})
        residual = find_violating_trace(self.current_problem(label=f"post-enact:{plan.id}"))
        effects.append({"post_enact_search": None if residual is None else residual.id})
        return effects

    def _apply_root_cause(self, plan: Plan) -> list[dict]:
        task = plan.root_cause
        if task is None:
            return []
        effects: list[dict] = []
        answers = {self.interventions[iv].key_class: self.interventions[iv].answer
                   for iv in plan.interventions if self.interventions[iv].state == "answered"}
        if task.kind == "assumption_evolution":
            value = answers.get("min_password_chars")
            if value is not None:
                anomaly = self.anomalies[plan.anomaly_id]
                self._push_model(evolve_assumption(
                    self.model, task.assumption_id, {task.param: value},
                    trigger=f"{anomaly.kind} anomaly {anomaly.id}",
                    approver_role=ROLE_ENGINEER,
                ))
                task.applied = True
                effects.append({"assumption_evolved": task.assumption_id,
                                "param": task.param, "value": value,
                                "model_version": self.model.version})
        elif task.kind == "patch":
            if answers.get("patch_ack") is True:
                task.applied = True
                effects.append({"patch_applied": task.cve_id, "device": task.device,
                                "fix": task.fix})
        elif task.kind == "advice":
            advice = answers.get("vuln_advice")
            if advice:
                task.applied = True
                effects.append({"advice_recorded": advice, "device": task.device})
        return effects


def _device_details(anomaly: Anomaly) -> str:
    attrs = anomaly.payload.get("attrs", {})
    if not attrs:
        return "No further details were reported for this device."
    details = ", ".join(f"{k}={v}" for k, v in sorted(attrs.items()))
    return f"Reported device details: {details}."


def _evolution_candidate_for(assumption_id: str, anomaly: Anomaly) -> ControlCandidate:
    from .learner import assumption_evolution_candidate

    return assumption_evolution_candidate(assumption_id, {}, tuple(anomaly.tags))
