"""Command-line entry points: scenario runs, event-log replay, model checks,
and the exhaustive trace oracle."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import engine, sim
from .config import AdaptsecConfig, load_config
from .goal_model import load_goal_model
from .monitor import Monitor, read_event_log
from .problems import load_problem


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="adaptsec",
                                     description="Adaptive smart-home security loop")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario")
    p_run.add_argument("scenario", help="scenario JSON file or shipped name")
    p_run.add_argument("--policy", help="human-answer policy JSON file")
    p_run.add_argument("--interactive", action="store_true",
                       help="serve the session over HTTP instead of using a policy")
    p_run.add_argument("--report", help="write the run report here")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--config", help="config JSON file")
    p_run.add_argument("--port", type=int, default=8000)

    p_replay = sub.add_parser("replay", help="replay an event log through the monitor")
    p_replay.add_argument("log", help="JSON Lines event log")

    p_check = sub.add_parser("check-model", help="parse and validate a goal-model file")
    p_check.add_argument("model")

    p_oracle = sub.add_parser("oracle", help="exhaustively enumerate traces of a problem")
    p_oracle.add_argument("problem", help="problem JSON file or shipped name")
    p_oracle.add_argument("--horizon", type=int, default=None)
    p_oracle.add_argument("--filter", choices=["all", "violating", "satisfying"], default="all")

    args = parser.parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "replay":
        return _cmd_replay(args)
    if args.command == "check-model":
        return _cmd_check_model(args)
    if args.command == "oracle":
        return _cmd_oracle(args)
    return 2


def _resolve_fixture(kind: str, name: str) -> str:
    from .problems import fixture_path
    from pathlib import Path

    if Path(name).exists():
        return name
    candidate = fixture_path(f"{kind}/{name}.json")
    if candidate.exists():
        return str(candidate)
    return name


def _cmd_run(args) -> int:
    scenario = sim.load_scenario(_resolve_fixture("scenarios", args.scenario))
    config = load_config(args.config) if args.config else AdaptsecConfig()
    if args.interactive:
        import os
        from pathlib import Path

        import uvicorn

        from .service import create_app

        console = Path(os.environ.get("ADAPTSEC_CONSOLE_DIST", "frontend/dist"))
        app = create_app(config=config, static_dir=console if console.exists() else None)
        app.state.session_manager.start(scenario.name, seed=args.seed)
        print(f"serving on http://127.0.0.1:{args.port} "
              f"(console {'mounted' if console.exists() else 'not built'})")
        uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="warning")
        return 0
    policy = sim.load_policy(_resolve_fixture("policies", args.policy or args.scenario))
    report = sim.run_scenario(scenario, policy, config=config, seed=args.seed)
    payload = sim.serialize_report(report)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    summary = {k: report[k] for k in ("scenario", "quiescent", "passed", "outcomes")}
    print(json.dumps(summary, indent=2))
    return 0 if report["passed"] else 1


def _cmd_replay(args) -> int:
    monitor = Monitor()
    for event in read_event_log(args.log):
        for anomaly in monitor.ingest(event):
            print(json.dumps(anomaly.to_dict(), separators=(",", ":")))
    return 0


def _cmd_check_model(args) -> int:
    try:
        model = load_goal_model(args.model)
    except Exception as err:
        print(f"invalid: {err}", file=sys.stderr)
        return 1
    print(json.dumps({
        "ok": True,
        "nodes": len(model.nodes),
        "assumptions": len(model.assumptions),
        "controls": len(model.controls),
        "root": model.root,
    }))
    return 0


def _cmd_oracle(args) -> int:
    problem = load_problem(_resolve_fixture("problems", args.problem))
    if args.horizon is not None:
        problem = dataclasses.replace(problem, horizon=args.horizon)
    for trace in engine.enumerate_traces(problem, args.filter):
        print(engine.serialize_trace(trace))
    return 0


if __name__ == "__main__":
    sys.exit(main())
