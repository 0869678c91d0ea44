"""Builders tying the goal model and action domain into search problems.

A problem fixture is a JSON file naming the base domain and goal model,
the network devices present (with trust marks), which assumptions to drop,
and any extra control constraints::

    {
      "label": "untrusted-device",
      "devices": [{"name": "d1", "trust": "untrusted", "connected": true}],
      "horizon": 4
    }
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from . import expr as ex
from .domain import ActionDomain, Entity, load_domain
from .engine import DEFAULT_HORIZON, SearchProblem
from .goal_model import GoalModel, load_goal_model


def fixture_path(name: str) -> Path:
    return Path(resources.files("adaptsec") / "fixtures" / name)


def base_domain() -> ActionDomain:
    return load_domain(fixture_path("smart_home.domain"))


def base_goal_model() -> GoalModel:
    return load_goal_model(fixture_path("smart_home.goals"))


def domain_with_devices(domain: ActionDomain, devices: list[dict]) -> ActionDomain:
    """Extend the base domain with scenario devices and their connections."""
    facts = set(domain.init_facts)
    for spec in devices:
        domain = domain.with_entity(
            Entity(spec["name"], spec.get("kind", "net_device"), spec.get("trust", "unknown"))
        )
        if spec.get("connected", False):
            facts.add(("connected", spec["name"]))
    return domain.with_init(facts)


def build_search_problem(model: GoalModel, domain: ActionDomain,
                         horizon: int = DEFAULT_HORIZON,
                         drop_assumptions: tuple[str, ...] = (),
                         extra_controls: tuple[ex.Expr, ...] = (),
                         label: str = "") -> SearchProblem:
    """Search problem for the model's requirement under its active
    assumptions and enacted controls."""
    requirement = model.requirement_expr()
    if not isinstance(requirement, ex.Never):
        requirement = ex.Never(requirement)
    return SearchProblem(
        domain=domain,
        requirement=requirement,
        assumptions=model.active_assumption_exprs(drop=tuple(drop_assumptions)),
        controls=model.enacted_control_exprs() + tuple(extra_controls),
        horizon=horizon,
        label=label,
    )


def problem_from_dict(payload: dict) -> SearchProblem:
    domain_name = payload.get("domain", "smart_home.domain")
    model_name = payload.get("goal_model", "smart_home.goals")
    domain = load_domain(_resolve(domain_name))
    model = load_goal_model(_resolve(model_name))
    domain = domain_with_devices(domain, payload.get("devices", []))
    if "init" in payload:
        facts = set()
        for text in payload["init"]:
            parsed = ex.parse_expr(text)
            facts.add((parsed.name, *(str(a) for a in parsed.args)))
        domain = domain.with_init(facts)
    extra = tuple(ex.parse_expr(text) for text in payload.get("extra_controls", []))
    return build_search_problem(
        model,
        domain,
        horizon=payload.get("horizon", DEFAULT_HORIZON),
        drop_assumptions=tuple(payload.get("drop_assumptions", [])),
        extra_controls=extra,
        label=payload.get("label", ""),
    )


def load_problem(path) -> SearchProblem:
    with open(path, "r", encoding="utf-8") as fh:
        return problem_from_dict(json.load(fh))


def _resolve(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    return fixture_path(name)


SHIPPED_PROBLEMS = (
    "untrusted_device.json",
    "trusted_speaker.json",
    "mitm_suspect.json",
    "frequent_devices.json",
    "locked_home.json",
)


def shipped_problems() -> list[SearchProblem]:
    return [load_problem(fixture_path(f"problems/{name}")) for name in SHIPPED_PROBLEMS]
