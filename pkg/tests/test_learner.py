import dataclasses

import pytest

from adaptsec import expr as ex
from adaptsec import problems
from adaptsec.domain import Action
from adaptsec.engine import check_trace, enumerate_traces, find_violating_trace
from adaptsec.errors import InterventionRequiredError, NoCandidateError
from adaptsec.learner import (
    LIBRARY,
    ConstraintTemplate,
    ControlCandidate,
    classify_sustainability,
    evaluate_candidate,
    generate_candidates,
    ground_forbidden_actions,
    instantiate,
    learn_control,
)

ROUTINE = [Action("exit", ("tenant", "home")), Action("close", ("sl",))]
SPEAKER_ROUTINE = [
    Action("exit", ("tenant", "home")), Action("close", ("sl",)),
    Action("open", ("speaker", "sl")), Action("enter", ("tenant", "home")),
]


@pytest.fixture()
def witness(untrusted_problem):
    return find_violating_trace(untrusted_problem)


@pytest.fixture()
def routine_trace(untrusted_problem):
    return check_trace(untrusted_problem, ROUTINE)


def test_candidates_from_canonical_trace(witness, untrusted_problem):
    candidates = generate_candidates(witness, LIBRARY, untrusted_problem.domain)
    texts = [c.text for c in candidates]
    assert texts == [
        "forbid open(X, sl) when X == d1",
        "forbid open(X, sl) when net_device(X)",
        "forbid open(X, sl) when not trusted(X)",
    ]
    assert all(c.enactable for c in candidates)
    assert candidates[0].specificity > candidates[1].specificity


def test_candidates_rejects_satisfying_trace(routine_trace, untrusted_problem):
    with pytest.raises(ValueError):
        generate_candidates(routine_trace, LIBRARY, untrusted_problem.domain)


def test_no_matching_template_errors(witness, untrusted_problem):
    probe_only = (ConstraintTemplate("probe", "subject", ("send_latency_probe",), ("net_device",)),)
    with pytest.raises(NoCandidateError):
        generate_candidates(witness, probe_only, untrusted_problem.domain)


def test_outsider_action_template_yields_non_enactable(witness, untrusted_problem):
    outsider_template = ConstraintTemplate(
        "forbid-entry-by-subject", "subject", ("enter",), ("outsider",))
    candidates = generate_candidates(witness, (outsider_template,), untrusted_problem.domain)
    assert [c.text for c in candidates] == ["forbid enter(X, home) when X == outsider"]
    assert not candidates[0].enactable


def test_time_bounded_template(witness, untrusted_problem):
    bounded = ConstraintTemplate("bounded", "subject", ("open",), ("net_device",), time_bound=True)
    candidate = generate_candidates(witness, (bounded,), untrusted_problem.domain)[0]
    assert candidate.text == "forbid open(X, sl) when X == d1 and T <= 4"
    assert candidate.specificity == 3
    forbidden = ground_forbidden_actions(
        dataclasses.replace(untrusted_problem, horizon=8), candidate.constraint)
    assert {t for _, t in forbidden} == {1, 2, 3, 4}


def test_evaluate_fills_eliminates_and_breaks(witness, untrusted_problem, routine_trace):
    candidate = generate_candidates(witness, LIBRARY, untrusted_problem.domain)[0]
    evaluated = evaluate_candidate(candidate, untrusted_problem, [routine_trace])
    violating = {t.id for t in enumerate_traces(untrusted_problem, "violating")}
    assert evaluated.eliminates == violating
    assert evaluated.breaks == frozenset()
    assert evaluated.evaluated


def test_general_forbid_breaks_speaker_positive(witness, speaker_problem, untrusted_problem):
    general = next(c for c in generate_candidates(witness, LIBRARY, untrusted_problem.domain)
                   if c.template == "forbid-command-by-agent-kind")
    positive = check_trace(speaker_problem, SPEAKER_ROUTINE)
    evaluated = evaluate_candidate(general, speaker_problem, [positive])
    assert positive.id in evaluated.breaks


def test_vacuous_guard_eliminates_nothing(witness, untrusted_problem, routine_trace):
    vacuous = ControlCandidate(
        constraint=ex.Forbid(ex.ActionPattern("open", ("X", "sl")), ex.Cmp("X", "==", "nobody")),
        template="vacuous", specificity=2, enactable=True, tags=("sl",),
    )
    evaluated = evaluate_candidate(vacuous, untrusted_problem, [routine_trace])
    assert evaluated.eliminates == frozenset()
    assert evaluated.breaks == frozenset()


def test_evaluate_requires_satisfying_positives(witness, untrusted_problem):
    with pytest.raises(ValueError):
        evaluate_candidate(
            generate_candidates(witness, LIBRARY, untrusted_problem.domain)[0],
            untrusted_problem, [witness])


def test_learn_control_reproduces_subject_rule(untrusted_problem, routine_trace):
    learned = learn_control(untrusted_problem, [routine_trace])
    assert learned.text == "forbid open(X, sl) when X == d1"
    assert find_violating_trace(untrusted_problem.with_controls(learned.constraint)) is None
    # the rule pins exactly the gadget's unlock commands within the horizon
    forbidden = ground_forbidden_actions(untrusted_problem, learned.constraint)
    expected = {(Action("open", ("d1", "sl")), t) for t in range(1, 5)}
    assert forbidden == expected


def test_learn_control_is_deterministic(untrusted_problem, routine_trace):
    first = learn_control(untrusted_problem, [routine_trace])
    second = learn_control(untrusted_problem, [routine_trace])
    assert first.text == second.text
    assert first.eliminates == second.eliminates


def test_learned_control_preserves_positives(untrusted_problem, routine_trace):
    learned = learn_control(untrusted_problem, [routine_trace])
    replay = check_trace(untrusted_problem.with_controls(learned.constraint), ROUTINE)
    assert replay.verdict == "satisfying"


def test_learning_with_trusted_device_positive_requires_human(untrusted_problem, speaker_problem):
    # The threat device is also used in a positive routine: the subject rule
    # would break it, and so would every wider rule.
    trusting = dataclasses.replace(
        untrusted_problem,
        domain=untrusted_problem.domain.with_trust("d1", "trusted"),
        assumptions=problems.base_goal_model().active_assumption_exprs(drop=("a",)),
    )
    positive = check_trace(trusting, [
        Action("exit", ("tenant", "home")), Action("close", ("sl",)),
        Action("open", ("d1", "sl")), Action("enter", ("tenant", "home")),
    ])
    with pytest.raises(InterventionRequiredError) as err:
        learn_control(trusting, [positive])
    assert err.value.candidates  # ranked options travel with the error


def test_learn_control_needs_a_violation(speaker_problem):
    with pytest.raises(ValueError):
        learn_control(speaker_problem, [])


def test_eliminates_agrees_with_research_route(untrusted_problem, routine_trace):
    learned = learn_control(untrusted_problem, [routine_trace])
    via_enumeration = learned.eliminates
    before = {t.id for t in enumerate_traces(untrusted_problem, "violating")}
    after = {t.id for t in enumerate_traces(
        untrusted_problem.with_controls(learned.constraint), "violating")}
    assert via_enumeration == before - after


def test_classification_of_the_three_mitigations(goal_model):
    device_forbid = ControlCandidate(
        constraint=ex.parse_expr("forbid open(X, sl) when X == d1"),
        template="forbid-command-by-subject", specificity=2, enactable=True,
        tags=("d1", "sl"), evaluated=True,
    )
    new_device_tags = type("A", (), {"tags": ("d1", "wifi")})
    assert classify_sustainability(device_forbid, goal_model, new_device_tags) == "short-term"

    from adaptsec.learner import assumption_evolution_candidate
    evolution = assumption_evolution_candidate("pw", {"min_password_chars": 12}, ("wifi",))
    frequent_tags = type("A", (), {"tags": ("gadget1", "gadget2", "gadget3", "wifi")})
    assert classify_sustainability(evolution, goal_model, frequent_tags) == "root-cause"

    block = ControlCandidate(
        constraint=ex.parse_expr(
            "(forbid open(X, sl) when net_device(X)) and (forbid close(X, sl) when net_device(X))"),
        template="block-incoming-traffic", specificity=1, enactable=True,
        tags=("sl",), evaluated=True,
    )
    mitm_tags = type("A", (), {"tags": ("sl",)})
    assert classify_sustainability(block, goal_model, mitm_tags) == "short-term"


def test_instantiate_skips_wrong_subjects(untrusted_problem):
    template = LIBRARY[0]
    assert instantiate(template, Action("open", ("sl",)), untrusted_problem.domain) is None
    assert instantiate(template, Action("exit", ("tenant", "home")), untrusted_problem.domain) is None
