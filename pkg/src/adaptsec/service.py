"""HTTP boundary for the operator console.

Exposes the loop state, a sequence-numbered server-sent event stream,
the intervention queue, trace walkthroughs, and a side-effect-free what-if
evaluator.  All mutating calls funnel through one lock, so the loop stays a
single logical thread; reads serve the latest published snapshot.

Persistence is append-only JSON Lines (events, answers, audit) plus a small
meta file; a session can be rebuilt by replaying the scenario deterministically
with the recorded answers.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse, StreamingResponse
from pydantic import BaseModel

from . import engine
from . import expr as ex
from .config import AdaptsecConfig
from .errors import AdaptsecError, AnswerSchemaError, InterventionStateError
from .goal_model import serialize_goal_model
from .learner import ControlCandidate, evaluate_candidate
from .problems import fixture_path
from .sim import HumanPolicy, Scenario, SimHarness, load_scenario


class AnswerBody(BaseModel):
    answer: object = None
    request_id: str | None = None


class WhatIfBody(BaseModel):
    constraint: str
    quarantines: list[str] = []


class StartBody(BaseModel):
    name: str
    interactive: bool = True
    seed: int | None = None
    policy: dict | None = None


class AdvanceBody(BaseModel):
    minutes: int


class LiveSession:
    """One running scenario bound to a loop, with append-only persistence."""

    def __init__(self, scenario: Scenario, config: AdaptsecConfig,
                 persist_dir: Path | None, seed: int | None = None,
                 policy: HumanPolicy | None = None):
        self.lock = threading.RLock()
        self.messages: list[dict] = []
        self.persist_dir = persist_dir
        self.answer_results: dict[str, dict] = {}
        if persist_dir is not None:
            persist_dir.mkdir(parents=True, exist_ok=True)
        self.harness = SimHarness(
            scenario, policy, config=config, seed=seed,
            subscriber=self._on_message,
            audit_sink=self._on_audit,
        )
        self._write_meta()

    # -- persistence -----------------------------------------------------

    def _append(self, name: str, payload: dict) -> None:
        if self.persist_dir is None:
            return
        with open(self.persist_dir / name, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(payload, separators=(",", ":")) + "\n")

    def _write_meta(self) -> None:
        if self.persist_dir is None:
            return
        meta = {"scenario": self.harness.scenario.name, "seed": self.harness.seed,
                "advanced_to": self.harness.now}
        (self.persist_dir / "meta.json").write_text(json.dumps(meta), encoding="utf-8")

    def _on_message(self, entry: dict) -> None:
        self.messages.append(entry)
        if entry["type"] == "event":
            self._append("events.jsonl", entry)

    def _on_audit(self, entry: dict) -> None:
        self._append("audit.jsonl", entry)

    # -- operations --------------------------------------------------------

    def snapshot(self) -> dict:
        with self.lock:
            orch = self.harness.orchestrator
            pending = [iv.to_dict() for iv in orch.interventions.values()
                       if iv.state == "pending"]
            if pending:
                phase = "waiting-human"
            elif not orch.quiescent:
                phase = "processing"
            else:
                phase = "monitoring"
            return {
                "scenario": self.harness.scenario.name,
                "now": self.harness.now,
                "loop_phase": phase,
                "open_anomalies": [orch.anomalies[a].to_dict()
                                   for a, s in sorted(orch.anomaly_status.items()) if s == "open"],
                "pending_interventions": pending,
                "enacted_controls": [
                    {"id": cid, "constraint": str(c.constraint),
                     "sustainability": c.sustainability, "origin": c.origin}
                    for cid, c in sorted(orch.model.controls.items()) if c.enacted
                ],
                "model_version": orch.model.version,
                "quiescent": orch.quiescent,
                "seq": self.messages[-1]["seq"] if self.messages else 0,
                "state_hash": self.state_hash(),
            }

    def state_hash(self) -> str:
        orch = self.harness.orchestrator
        blob = "|".join((
            serialize_goal_model(orch.model),
            ";".join(sorted(map(str, self.harness.world_state.facts))),
            ";".join(t.id for t in orch.positives),
            str(len(orch.audit)),
            str(orch.domain),
        ))
        return hashlib.sha1(blob.encode("utf-8")).hexdigest()

    def answer(self, intervention_id: str, body: AnswerBody) -> dict:
        with self.lock:
            orch = self.harness.orchestrator
            request = orch.interventions.get(intervention_id)
            if request is None:
                raise HTTPException(404, f"unknown intervention {intervention_id}")
            stored = self.answer_results.get(intervention_id)
            if stored is not None:
                same_request = body.request_id is not None and body.request_id == stored["request_id"]
                if same_request or body.answer == stored["answer"]:
                    return stored["result"]  # idempotent replay, no second resumption
                raise HTTPException(409, f"intervention {intervention_id} already answered")
            if request.state != "pending":
                raise HTTPException(409, f"intervention {intervention_id} is {request.state}")
            try:
                resumption = orch.answer_intervention(intervention_id, body.answer)
            except AnswerSchemaError as err:
                raise HTTPException(422, str(err))
            except InterventionStateError as err:
                raise HTTPException(409, str(err))
            result = resumption.to_dict()
            self.answer_results[intervention_id] = {
                "request_id": body.request_id, "answer": body.answer, "result": result,
            }
            self._append("answers.jsonl", {"at": self.harness.now,
                                           "intervention_id": intervention_id,
                                           "answer": body.answer,
                                           "request_id": body.request_id})
            self._write_meta()
            return result

    def advance(self, minutes: int) -> dict:
        with self.lock:
            self.harness.advance(self.harness.now + minutes)
            self._write_meta()
            return self.snapshot()

    def whatif(self, body: WhatIfBody) -> dict:
        with self.lock:
            try:
                constraint = ex.parse_expr(body.constraint)
            except AdaptsecError as err:
                raise HTTPException(422, f"bad constraint: {err}")
            if not isinstance(constraint, (ex.Forbid, ex.And)):
                raise HTTPException(422, "what-if expects a forbid rule (or a conjunction of them)")
            orch = self.harness.orchestrator
            candidate = ControlCandidate(
                constraint=constraint, template="what-if", specificity=0,
                enactable=True, tags=("whatif",), quarantines=tuple(body.quarantines),
            )
            evaluated = evaluate_candidate(candidate, orch.current_problem(), orch.positives)
            return {
                "constraint": body.constraint,
                "eliminates": len(evaluated.eliminates),
                "breaks": len(evaluated.breaks),
                "eliminated_trace_ids": sorted(evaluated.eliminates),
                "broken_trace_ids": sorted(evaluated.breaks),
            }

    def trace_view(self, trace_id: str) -> dict:
        with self.lock:
            trace = self.harness.orchestrator.traces.get(trace_id)
            if trace is None:
                raise HTTPException(404, f"unknown trace {trace_id}")
            payload = engine.trace_to_dict(trace)
            payload["steps"] = engine.trace_steps(trace)
            return payload


class SessionManager:
    def __init__(self, config: AdaptsecConfig, persist_root: Path | None = None):
        self.config = config
        self.persist_root = persist_root
        self.session: LiveSession | None = None

    def start(self, name: str, seed: int | None = None,
              policy: HumanPolicy | None = None) -> LiveSession:
        path = Path(name)
        if not path.exists():
            path = fixture_path(f"scenarios/{name.replace('-', '_')}.json")
        scenario = load_scenario(path)
        persist_dir = None
        if self.persist_root is not None:
            persist_dir = self.persist_root / scenario.name
        self.session = LiveSession(scenario, self.config, persist_dir, seed=seed, policy=policy)
        return self.session

    def resume(self, persist_dir: Path) -> LiveSession:
        """Rebuild a session by replaying the recorded answers in order."""
        meta = json.loads((persist_dir / "meta.json").read_text(encoding="utf-8"))
        meta["scenario"] = meta["scenario"].replace("-", "_")
        answers = []
        answers_file = persist_dir / "answers.jsonl"
        if answers_file.exists():
            with open(answers_file, "r", encoding="utf-8") as fh:
                answers = [json.loads(line) for line in fh if line.strip()]
        # Replay into a fresh store: move the old logs aside, then re-record.
        for name in ("events.jsonl", "audit.jsonl", "answers.jsonl"):
            stale = persist_dir / name
            if stale.exists():
                stale.rename(persist_dir / (name + ".replayed"))
        session = LiveSession(
            load_scenario(fixture_path(f"scenarios/{meta['scenario']}.json")),
            self.config, persist_dir, seed=meta["seed"],
        )
        for entry in answers:
            session.advance(max(0, entry["at"] - session.harness.now))
            session.answer(entry["intervention_id"],
                           AnswerBody(answer=entry["answer"], request_id=entry.get("request_id")))
        session.advance(max(0, meta["advanced_to"] - session.harness.now))
        self.session = session
        return session

    def require(self) -> LiveSession:
        if self.session is None:
            raise HTTPException(409, "no scenario running; POST /scenario/start first")
        return self.session


def create_app(config: AdaptsecConfig | None = None, persist_root: Path | None = None,
               static_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="adaptsec intervention service")
    # Single-operator desk service; the console may be served from another
    # port during development, so cross-origin reads are open.
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    manager = SessionManager(config or AdaptsecConfig(), persist_root)
    app.state.session_manager = manager

    @app.get("/state")
    def get_state():
        return manager.require().snapshot()

    @app.get("/interventions")
    def get_interventions(state: str = "pending"):
        session = manager.require()
        with session.lock:
            orch = session.harness.orchestrator
            return [iv.to_dict() for iv in orch.interventions.values()
                    if state in ("all", iv.state)]

    @app.post("/interventions/{intervention_id}/answer")
    def post_answer(intervention_id: str, body: AnswerBody):
        return manager.require().answer(intervention_id, body)

    @app.get("/traces/{trace_id}")
    def get_trace(trace_id: str):
        return manager.require().trace_view(trace_id)

    @app.post("/whatif")
    def post_whatif(body: WhatIfBody):
        return manager.require().whatif(body)

    @app.post("/scenario/start")
    def post_start(body: StartBody):
        policy = None
        if not body.interactive and body.policy is not None:
            policy = HumanPolicy.from_dict(body.policy)
        session = manager.start(body.name, seed=body.seed, policy=policy)
        return session.snapshot()

    @app.post("/scenario/advance")
    def post_advance(body: AdvanceBody):
        return manager.require().advance(body.minutes)

    @app.get("/stream")
    async def get_stream(request: Request, frm: int = 0, follow: bool = True):
        session = manager.require()

        async def generate():
            cursor = frm
            idle = 0.0
            while True:
                with session.lock:
                    backlog = [m for m in session.messages if m["seq"] > cursor]
                for message in backlog:
                    cursor = message["seq"]
                    idle = 0.0
                    yield f"id: {message['seq']}\nevent: {message['type']}\ndata: {json.dumps(message, separators=(',', ':'))}\n\n"
                if not follow:
                    return
                if await request.is_disconnected():
                    return
                await asyncio.sleep(0.05)
                idle += 0.05
                if idle >= 15.0:
                    idle = 0.0
                    yield ": keep-alive\n\n"

        return StreamingResponse(generate(), media_type="text/event-stream")

    @app.get("/audit")
    def get_audit():
        session = manager.require()
        with session.lock:
            return list(session.harness.orchestrator.audit)

    if static_dir is not None and Path(static_dir).exists():
        static_root = Path(static_dir)

        @app.get("/")
        def index():
            return FileResponse(static_root / "index.html")

        @app.get("/app/{path:path}")
        def static_files(path: str):
            target = (static_root / path).resolve()
            if not str(target).startswith(str(static_root.resolve())) or not target.is_file():
                raise HTTPException(404, "not found")
            return FileResponse(target)

    @app.exception_handler(AdaptsecError)
    def adaptsec_error(_request, err: AdaptsecError):
        return JSONResponse(status_code=422, content={"detail": str(err)})

    return app
