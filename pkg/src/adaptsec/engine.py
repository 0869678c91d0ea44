"""Bounded trace search over the action domain.

Given a requirement (a ``never`` safety expression), the active domain
assumptions, and the enacted controls, the engine looks for action sequences
that drive the world into a violating state.  Search is iterative-deepening
depth-first with ground actions visited in (name, args) order, so the
shortest violating trace is found first and ties break lexicographically.

``enumerate_traces`` is the exhaustive oracle: every applicable action
sequence up to the horizon, in the same deterministic order.  It exists so
the search result can always be cross-checked against brute force.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from . import expr as ex
from .domain import Action, ActionDomain, State
from .errors import HorizonError, InapplicableActionError

DEFAULT_HORIZON = 4
MAX_HORIZON = 8
ORACLE_MAX_HORIZON = 6

VIOLATING = "violating"
SATISFYING = "satisfying"


@dataclass(frozen=True)
class Trace:
    id: str
    actions: tuple[tuple[int, Action], ...]
    states: tuple[State, ...]
    verdict: str
    violated_at: int | None = None

    def action_list(self) -> list[Action]:
        return [a for _, a in self.actions]


@dataclass(frozen=True)
class SearchProblem:
    domain: ActionDomain
    requirement: ex.Never
    assumptions: tuple[ex.Expr, ...] = ()
    controls: tuple[ex.Expr, ...] = ()
    horizon: int = DEFAULT_HORIZON
    init: State | None = None
    label: str = ""

    def initial_state(self) -> State:
        return self.init if self.init is not None else self.domain.initial_state()

    def with_controls(self, *extra: ex.Expr) -> "SearchProblem":
        return SearchProblem(
            domain=self.domain,
            requirement=self.requirement,
            assumptions=self.assumptions,
            controls=self.controls + tuple(extra),
            horizon=self.horizon,
            init=self.init,
            label=self.label,
        )


@dataclass
class _Compiled:
    """Search-ready view: constraints sorted into pruning and filtering duties."""

    domain: ActionDomain
    statics: frozenset
    violation: ex.Expr
    prune_rules: list[ex.Forbid] = field(default_factory=list)
    obligations: list[ex.After] = field(default_factory=list)
    state_filters: list[ex.Expr] = field(default_factory=list)
    grounded: list[tuple[Action, ex.Expr, ex.Binding]] = field(default_factory=list)

    def context(self, state: State) -> frozenset:
        return state.facts | self.statics


def compile_problem(problem: SearchProblem) -> _Compiled:
    if not isinstance(problem.requirement, ex.Never):
        raise TypeError("requirement must be a 'never <expr>' safety property")
    domain = problem.domain
    compiled = _Compiled(
        domain=domain,
        statics=domain.static_facts(),
        violation=problem.requirement.inner,
    )
    def classify(constraint: ex.Expr) -> None:
        if isinstance(constraint, ex.TrueExpr):
            return
        if isinstance(constraint, ex.Forbid):
            compiled.prune_rules.append(constraint)
        elif isinstance(constraint, ex.After):
            compiled.obligations.append(constraint)
        elif isinstance(constraint, ex.Never):
            compiled.state_filters.append(ex.Not(constraint.inner))
        elif isinstance(constraint, ex.And) and any(
                isinstance(item, (ex.Forbid, ex.After, ex.Never)) for item in constraint.items):
            # A conjunction of rules contributes each rule separately.
            for item in constraint.items:
                classify(item)
        else:
            compiled.state_filters.append(constraint)

    for constraint in (*problem.assumptions, *problem.controls):
        classify(constraint)
    for action in domain.ground_actions():
        schema = domain.schema_for(action)
        binding = {var: arg for (var, _), arg in zip(schema.params, action.args)}
        compiled.grounded.append((action, schema.precondition, binding))
    return compiled


def _forbidden(compiled: _Compiled, context: frozenset, action: Action, time: int) -> bool:
    for rule in compiled.prune_rules:
        binding = ex.match_pattern(rule.pattern, action.name, action.args)
        if binding is None:
            continue
        binding["T"] = time
        if ex.holds_in(context, rule.guard, binding):
            return True
    return False


def _obligation_blocks(compiled: _Compiled, prev: Action | None, action: Action) -> bool:
    if prev is None:
        return False
    for rule in compiled.obligations:
        binding = ex.match_pattern(rule.trigger, prev.name, prev.args)
        if binding is None:
            continue
        if ex.match_pattern(rule.required, action.name, action.args, binding) is None:
            return True
    return False


def _passes_filters(compiled: _Compiled, state: State) -> bool:
    if not compiled.state_filters:
        return True
    context = compiled.context(state)
    return all(ex.holds_in(context, f) for f in compiled.state_filters)


def action_allowed(compiled: _Compiled, state: State, action: Action,
                   precondition: ex.Expr, binding: ex.Binding,
                   prev: Action | None) -> bool:
    if _obligation_blocks(compiled, prev, action):
        return False
    context = compiled.context(state)
    if not ex.holds_in(context, precondition, dict(binding)):
        return False
    return not _forbidden(compiled, context, action, state.time + 1)


def _successors(compiled: _Compiled, state: State, prev: Action | None):
    for action, pre, binding in compiled.grounded:
        if action_allowed(compiled, state, action, pre, binding, prev):
            nxt = compiled.domain.step(state, action)
            if _passes_filters(compiled, nxt):
                yield action, nxt


def _violated(compiled: _Compiled, state: State) -> bool:
    return ex.holds_in(compiled.context(state), compiled.violation)


def trace_id(actions: list[Action] | tuple[Action, ...]) -> str:
    payload = ";".join(str(a) for a in actions)
    return "t" + hashlib.sha1(payload.encode("utf-8")).hexdigest()[:10]


def _make_trace(actions: list[Action], states: list[State], violated_at: int | None) -> Trace:
    verdict = VIOLATING if violated_at is not None else SATISFYING
    return Trace(
        id=trace_id(actions),
        actions=tuple((i + 1, a) for i, a in enumerate(actions)),
        states=tuple(states),
        verdict=verdict,
        violated_at=violated_at,
    )


def _check_horizon(horizon: int, limit: int) -> None:
    if not (1 <= horizon <= limit):
        raise HorizonError(f"horizon {horizon} outside 1..{limit}")


def find_violating_trace(problem: SearchProblem) -> Trace | None:
    """Shortest violating trace within the horizon, or None when a complete
    bounded search finds nothing."""
    _check_horizon(problem.horizon, MAX_HORIZON)
    compiled = compile_problem(problem)
    init = problem.initial_state()
    if not _passes_filters(compiled, init):
        return None
    if _violated(compiled, init):
        return _make_trace([], [init], init.time)

    def dfs(state: State, prev: Action | None, actions: list[Action],
            states: list[State], limit: int) -> Trace | None:
        if len(actions) == limit:
            return None
        for action, nxt in _successors(compiled, state, prev):
            actions.append(action)
            states.append(nxt)
            if _violated(compiled, nxt):
                return _make_trace(list(actions), list(states), nxt.time)
            found = dfs(nxt, action, actions, states, limit)
            if found is not None:
                return found
            actions.pop()
            states.pop()
        return None

    for limit in range(1, problem.horizon + 1):
        found = dfs(init, None, [], [init], limit)
        if found is not None:
            return found
    return None


def enumerate_traces(problem: SearchProblem, verdict_filter: str = "all") -> list[Trace]:
    """Exhaustive, duplicate-free enumeration of applicable action sequences
    up to the horizon (the empty sequence included), in lexicographic order."""
    if verdict_filter not in ("all", VIOLATING, SATISFYING):
        raise ValueError(f"unknown filter {verdict_filter!r}")
    _check_horizon(problem.horizon, ORACLE_MAX_HORIZON)
    compiled = compile_problem(problem)
    init = problem.initial_state()
    out: list[Trace] = []
    if not _passes_filters(compiled, init):
        return out

    def emit(actions: list[Action], states: list[State], violated_at: int | None) -> None:
        trace = _make_trace(list(actions), list(states), violated_at)
        if verdict_filter == "all" or trace.verdict == verdict_filter:
            out.append(trace)

    def dfs(state: State, prev: Action | None, actions: list[Action],
            states: list[State], violated_at: int | None) -> None:
        emit(actions, states, violated_at)
        if len(actions) == problem.horizon:
            return
        for action, nxt in _successors(compiled, state, prev):
            actions.append(action)
            states.append(nxt)
            first_violation = violated_at
            if first_violation is None and _violated(compiled, nxt):
                first_violation = nxt.time
            dfs(nxt, action, actions, states, first_violation)
            actions.pop()
            states.pop()

    dfs(init, None, [], [init], init.time if _violated(compiled, init) else None)
    return out


def check_trace(problem: SearchProblem, actions: list[Action]) -> Trace:
    """Replay a ground action sequence under the problem's constraints and
    assign a verdict; fails on the first inapplicable or forbidden action."""
    compiled = compile_problem(problem)
    state = problem.initial_state()
    if not _passes_filters(compiled, state):
        raise InapplicableActionError("initial state violates a state filter", 0)
    states = [state]
    prev: Action | None = None
    violated_at = state.time if _violated(compiled, state) else None
    for i, action in enumerate(actions):
        schema = compiled.domain.schema_for(action)
        binding = {var: arg for (var, _), arg in zip(schema.params, action.args)}
        if not action_allowed(compiled, state, action, schema.precondition, binding, prev):
            raise InapplicableActionError(f"action {action} rejected during replay", i + 1)
        state = compiled.domain.step(state, action)
        if not _passes_filters(compiled, state):
            raise InapplicableActionError(f"state after {action} violates a state filter", i + 1)
        states.append(state)
        if violated_at is None and _violated(compiled, state):
            violated_at = state.time
        prev = action
    return _make_trace(list(actions), states, violated_at)


# --- serialization -------------------------------------------------------


def trace_to_dict(trace: Trace) -> dict:
    return {
        "id": trace.id,
        "actions": [{"t": t, "name": a.name, "args": list(a.args)} for t, a in trace.actions],
        "verdict": trace.verdict,
        "violated_at": trace.violated_at,
    }


def serialize_trace(trace: Trace) -> str:
    return json.dumps(trace_to_dict(trace), separators=(",", ":"))


def trace_from_dict(payload: dict) -> list[Action]:
    return [Action(item["name"], tuple(item["args"])) for item in payload["actions"]]


def trace_steps(trace: Trace) -> list[dict]:
    """Per-step state diffs for walkthrough displays."""
    steps = []
    for i, (t, action) in enumerate(trace.actions):
        before, after = trace.states[i].facts, trace.states[i + 1].facts
        steps.append({
            "t": t,
            "action": {"name": action.name, "args": list(action.args)},
            "added": sorted("%s(%s)" % (f[0], ",".join(f[1:])) for f in after - before),
            "removed": sorted("%s(%s)" % (f[0], ",".join(f[1:])) for f in before - after),
        })
    return steps
