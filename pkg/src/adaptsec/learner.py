"""Learning evolved security controls from violating and satisfying traces.

Candidate controls are template instantiations that forbid an action seen on
the way to a violation.  Each candidate is scored against the exhaustive
oracle: which violating traces it removes, and which required positive
behaviours it would break.  Selection is a deterministic ranking, so the
same inputs always learn the same control.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from . import expr as ex
from .domain import Action, ActionDomain
from .engine import (
    SearchProblem,
    Trace,
    check_trace,
    enumerate_traces,
    find_violating_trace,
)
from .errors import InapplicableActionError, InterventionRequiredError, NoCandidateError


@dataclass(frozen=True)
class ConstraintTemplate:
    """A forbid-rule shape: which actions it targets and how the subject
    (first argument) is guarded."""

    name: str
    guard: str  # subject | kind | trust
    action_names: tuple[str, ...]
    subject_kinds: tuple[str, ...]
    time_bound: bool = False
    scope_tags: tuple[str, ...] = ()


# Shipped template library: lock commands by subject, by device kind, and by
# trust mark, plus default-deny for new network connections.
LIBRARY: tuple[ConstraintTemplate, ...] = (
    ConstraintTemplate("forbid-command-by-subject", "subject", ("open", "close"), ("net_device",)),
    ConstraintTemplate("forbid-command-by-agent-kind", "kind", ("open", "close"), ("net_device",)),
    ConstraintTemplate("forbid-command-by-trust", "trust", ("open", "close"), ("net_device",)),
    ConstraintTemplate("forbid-connect-by-default", "trust", ("connect",), ("net_device",),
                       scope_tags=("wifi",)),
)

# Kinds of subjects the system has an actuator over; forbidding anyone
# else's actions can be suggested but never enacted.
ACTUATED_KINDS = frozenset({"net_device"})


@dataclass(frozen=True)
class ControlCandidate:
    constraint: ex.Forbid
    template: str
    specificity: int
    enactable: bool
    tags: tuple[str, ...]
    eliminates: frozenset[str] = frozenset()
    breaks: frozenset[str] = frozenset()
    sustainability: str = "unknown"  # short-term | root-cause | unknown
    evolves_assumption: str | None = None
    quarantines: tuple[str, ...] = ()  # devices disconnected on enactment
    evaluated: bool = False

    @property
    def text(self) -> str:
        return str(self.constraint)

    def rank_key(self) -> tuple:
        return (
            0 if (self.evaluated and not self.breaks) else 1,
            -len(self.eliminates),
            -self.specificity,
            self.text,
        )


def _guard_for(template: ConstraintTemplate, subject: str, domain: ActionDomain,
               horizon: int | None) -> tuple[ex.Expr, int]:
    """Build the guard expression and its specificity score.

    An equality pin scores 2, a predicate restriction 1, a time bound 1.
    """
    if template.guard == "subject":
        guard: ex.Expr = ex.Cmp("X", "==", subject)
        score = 2
    elif template.guard == "kind":
        kind = domain.entity(subject).kind
        guard = ex.Lit(kind, ("X",))
        score = 1
    elif template.guard == "trust":
        guard = ex.Not(ex.Lit("trusted", ("X",)))
        score = 1
    else:
        raise ValueError(f"unknown guard kind {template.guard!r}")
    if template.time_bound and horizon is not None:
        guard = ex.And((guard, ex.Cmp("T", "<=", horizon)))
        score += 1
    return guard, score


def instantiate(template: ConstraintTemplate, action: Action, domain: ActionDomain,
                horizon: int | None = None) -> ControlCandidate | None:
    """Apply a template to one trace action; None when it does not match."""
    if action.name not in template.action_names or not action.args:
        return None
    subject = action.args[0]
    entity = domain.entity(subject)
    if entity is None or entity.kind not in template.subject_kinds:
        return None
    pattern = ex.ActionPattern(action.name, ("X",) + action.args[1:])
    guard, specificity = _guard_for(template, subject, domain, horizon)
    tags = tuple(dict.fromkeys(
        (subject,) * (template.guard == "subject")
        + action.args[1:]
        + template.scope_tags
    ))
    return ControlCandidate(
        constraint=ex.Forbid(pattern, guard),
        template=template.name,
        specificity=specificity,
        enactable=entity.kind in ACTUATED_KINDS,
        tags=tags or ("wifi",),
    )


def generate_candidates(violating: Trace, templates: tuple[ConstraintTemplate, ...],
                        domain: ActionDomain) -> list[ControlCandidate]:
    """Every template instantiation forbidding an action that causally
    precedes the violation, deduplicated, most specific first."""
    if violating.verdict != "violating":
        raise ValueError("candidate generation needs a violating trace")
    horizon = violating.violated_at
    out: list[ControlCandidate] = []
    seen: set[str] = set()
    for t, action in violating.actions:
        if violating.violated_at is not None and t > violating.violated_at:
            break
        for template in templates:
            candidate = instantiate(template, action, domain, horizon)
            if candidate is not None and candidate.text not in seen:
                seen.add(candidate.text)
                out.append(candidate)
    if not out:
        raise NoCandidateError("no template matches any action of the trace")
    out.sort(key=lambda c: (-c.specificity, c.text))
    return out


def _apply_candidate(problem: SearchProblem, candidate: ControlCandidate) -> SearchProblem:
    restricted = problem.with_controls(candidate.constraint)
    if candidate.quarantines:
        init = problem.initial_state()
        facts = {f for f in init.facts
                 if not (f[0] == "connected" and f[1] in candidate.quarantines)}
        restricted = replace(restricted, init=init.with_facts(facts))
    return restricted


def _replays(problem: SearchProblem, trace: Trace) -> bool:
    try:
        check_trace(problem, trace.action_list())
        return True
    except InapplicableActionError:
        return False


def evaluate_candidate(candidate: ControlCandidate, problem: SearchProblem,
                       positives: list[Trace]) -> ControlCandidate:
    """Fill in eliminates/breaks by replaying the oracle's violating traces
    and the positive suite under the candidate."""
    for positive in positives:
        if positive.verdict != "satisfying":
            raise ValueError(f"positive trace {positive.id} is not satisfying")
    restricted = _apply_candidate(problem, candidate)
    eliminated = {
        trace.id for trace in enumerate_traces(problem, "violating")
        if not _replays(restricted, trace)
    }
    broken = {trace.id for trace in positives if not _replays(restricted, trace)}
    return replace(candidate, eliminates=frozenset(eliminated), breaks=frozenset(broken),
                   evaluated=True)


def learn_control(problem: SearchProblem, positives: list[Trace],
                  templates: tuple[ConstraintTemplate, ...] = LIBRARY) -> ControlCandidate:
    """Pick the control that removes every bounded violation while keeping
    all positive behaviours replayable.

    Ranking: no broken positives first, then most violations eliminated,
    then most specific, then constraint text.  Raises
    InterventionRequiredError (carrying the ranked candidates) when no
    candidate clears the bar.
    """
    witness = find_violating_trace(problem)
    if witness is None:
        raise ValueError("problem has no bounded violation to learn from")
    all_violating = {t.id for t in enumerate_traces(problem, "violating")}
    candidates = generate_candidates(witness, templates, problem.domain)
    evaluated = sorted(
        (evaluate_candidate(c, problem, positives) for c in candidates),
        key=lambda c: c.rank_key(),
    )
    for candidate in evaluated:
        if candidate.enactable and not candidate.breaks and candidate.eliminates >= all_violating:
            return candidate
    raise InterventionRequiredError(
        "no candidate eliminates all violations without breaking positive behaviour",
        candidates=evaluated,
    )


def classify_sustainability(candidate: ControlCandidate, model, anomaly) -> str:
    """root-cause when the change lands on an affected assumption-level model
    part; everything else is a stopgap."""
    from .goal_model import affected_model_parts

    affected = affected_model_parts(model, anomaly)
    if candidate.evolves_assumption and candidate.evolves_assumption in affected:
        return "root-cause"
    return "short-term"


def assumption_evolution_candidate(assumption_id: str, params: dict,
                                   tags: tuple[str, ...]) -> ControlCandidate:
    """Wrap an assumption evolution so plans and sustainability
    classification can treat it like any other mitigation."""
    pattern = ex.ActionPattern("noop", ())
    return ControlCandidate(
        constraint=ex.Forbid(pattern, ex.Not(ex.TrueExpr())),
        template="assumption-evolution",
        specificity=0,
        enactable=True,
        tags=tags,
        evolves_assumption=assumption_id,
        evaluated=True,
    )


def ground_forbidden_actions(problem: SearchProblem, constraint: ex.Forbid) -> set[tuple[Action, int]]:
    """All (ground action, time) pairs the rule forbids within the horizon,
    judged against the domain's static facts (for state-independent guards)."""
    statics = problem.domain.static_facts()
    out: set[tuple[Action, int]] = set()
    for action in problem.domain.ground_actions():
        binding = ex.match_pattern(constraint.pattern, action.name, action.args)
        if binding is None:
            continue
        for t in range(1, problem.horizon + 1):
            b = dict(binding)
            b["T"] = t
            if ex.holds_in(statics, constraint.guard, b):
                out.add((action, t))
    return out
