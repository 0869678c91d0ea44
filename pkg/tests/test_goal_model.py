import dataclasses

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from adaptsec import expr as ex
from adaptsec import problems
from adaptsec.engine import find_violating_trace
from adaptsec.errors import (
    CycleError,
    DanglingReferenceError,
    DslSyntaxError,
    ParamTypeError,
    UnknownAssumptionError,
)
from adaptsec.goal_model import (
    GoalModel,
    GoalNode,
    SecurityControl,
    add_control,
    affected_model_parts,
    evolve_assumption,
    parse_goal_model,
    serialize_goal_model,
    validate_model,
)


def test_fixture_structure(goal_model):
    assert goal_model.root == "root"
    root = goal_model.nodes["root"]
    assert root.refinement == "AND"
    assert root.children == ("r_auth", "g_lock", "g_wifi")
    assert set(goal_model.assumptions) == {"a", "b", "c", "d", "pw"}
    assert goal_model.assumptions["pw"].params == {"min_password_chars": 8}
    assert goal_model.controls["c_2fa"].enacted
    assert goal_model.nodes["r_auth"].formal == ex.parse_expr("never in(outsider, home)")


def test_fixture_round_trip(goal_model):
    assert parse_goal_model(serialize_goal_model(goal_model)) == goal_model


def test_single_requirement_node_is_valid():
    model = parse_goal_model('req only "Nothing bad happens" formal=(never bad(x)) tags=x\n')
    assert model.root == "only"
    assert model.nodes["only"].kind == "requirement"


def test_dangling_assumption_reference_fails():
    text = (
        'goal root "Top" AND\n'
        '  req r "Safety" formal=(never bad(x)) tags=x\n'
        '  assume ghost tags=x\n'
    )
    with pytest.raises(DanglingReferenceError):
        parse_goal_model(text)


def test_duplicate_node_is_not_a_tree():
    text = (
        'goal root "Top" AND\n'
        '  req r "One" tags=x\n'
        '  req r "Two" tags=x\n'
    )
    with pytest.raises(CycleError):
        parse_goal_model(text)


def test_goal_without_refinement_fails():
    with pytest.raises(DslSyntaxError):
        parse_goal_model('goal root "Top"\n  req r "Leaf" tags=x\n')


def test_syntax_error_carries_line():
    try:
        parse_goal_model('wibble root "Top" AND\n')
    except DslSyntaxError as err:
        assert err.line == 1
    else:
        pytest.fail("expected a syntax error")


# -- evolution ---------------------------------------------------------------


def test_evolve_password_assumption(goal_model):
    evolved = evolve_assumption(goal_model, "pw", {"min_password_chars": 12},
                                trigger="frequent new-device anomaly", approver_role="engineer")
    assert evolved.assumptions["pw"].params["min_password_chars"] == 12
    assert evolved.version == goal_model.version + 1
    record = evolved.history[-1]
    assert record.old_params == {"min_password_chars": 8}
    assert record.new_params == {"min_password_chars": 12}
    assert record.trigger == "frequent new-device anomaly"
    # prior version untouched
    assert goal_model.assumptions["pw"].params["min_password_chars"] == 8
    assert goal_model.history == ()


def test_noop_evolution_still_records(goal_model):
    evolved = evolve_assumption(goal_model, "pw", {"min_password_chars": 8})
    assert evolved.assumptions["pw"] == goal_model.assumptions["pw"]
    assert len(evolved.history) == 1
    assert evolved.version == goal_model.version + 1


def test_history_is_append_only(goal_model):
    one = evolve_assumption(goal_model, "pw", {"min_password_chars": 10})
    two = evolve_assumption(one, "pw", {"min_password_chars": 12})
    assert [r.new_params["min_password_chars"] for r in two.history] == [10, 12]
    assert one.history == two.history[:1]


def test_deactivating_assumption_changes_search_view(goal_model):
    domain = problems.domain_with_devices(
        problems.base_domain(), [{"name": "speaker", "trust": "trusted", "connected": True}]
    )
    active = problems.build_search_problem(goal_model, domain)
    assert find_violating_trace(active) is None
    evolved = evolve_assumption(goal_model, "a", {"active": False},
                                trigger="suspected interception")
    dropped = problems.build_search_problem(evolved, domain)
    trace = find_violating_trace(dropped)
    assert trace is not None
    assert any(a.name == "open" and a.args == ("speaker", "sl") for a in trace.action_list())


def test_evolution_errors(goal_model):
    with pytest.raises(UnknownAssumptionError):
        evolve_assumption(goal_model, "nope", {})
    with pytest.raises(ParamTypeError):
        evolve_assumption(goal_model, "pw", {"min_password_chars": "twelve"})
    with pytest.raises(ParamTypeError):
        evolve_assumption(goal_model, "pw", {"unheard_of": 3})


# -- affected parts ------------------------------------------------------------


def test_affected_parts_new_device(goal_model):
    got = affected_model_parts(goal_model, {"d1", "wifi"})
    assert got == {"g_wifi", "c_wifi_pw", "pw"}


def test_affected_parts_latency(goal_model):
    got = affected_model_parts(goal_model, {"sl"})
    assert got == {"r_auth", "g_lock", "c_2fa", "a", "b"}


def test_affected_parts_empty_tags(goal_model):
    assert affected_model_parts(goal_model, set()) == set()


@settings(max_examples=50, deadline=None)
@given(st.sets(st.sampled_from(["sl", "wifi", "home", "tenant", "d1", "nothing"])),
       st.sets(st.sampled_from(["sl", "wifi", "home", "tenant", "d1", "nothing"])))
def test_affected_parts_monotone(small, extra):
    model = problems.base_goal_model()
    subset = affected_model_parts(model, small)
    superset = affected_model_parts(model, small | extra)
    assert subset <= superset
    assert superset <= set(model.nodes)


# -- controls ------------------------------------------------------------------


def test_add_control_serializes_to_control_line(goal_model):
    control = SecurityControl(
        id="lc-01",
        constraint=ex.parse_expr("forbid open(X, sl) when X == d1"),
        origin="learned",
        sustainability="short-term",
        enacted=True,
        rationale="contain the unvetted gadget",
        learned_from=("t889ac0158e",),
    )
    extended = add_control(goal_model, control, tags=("d1", "sl"))
    assert extended.version == goal_model.version + 1
    assert "lc-01" in extended.nodes and extended.nodes["lc-01"].kind == "control-leaf"
    text = serialize_goal_model(extended)
    line = next(l for l in text.splitlines() if "lc-01" in l)
    assert line.strip().startswith("control lc-01 constraint=(forbid open(X, sl) when X == d1)")
    assert "learned_from=t889ac0158e" in line
    assert parse_goal_model(text) == extended


def test_add_control_requires_tags_and_fresh_id(goal_model):
    control = SecurityControl(id="c_2fa", constraint=ex.TrueExpr(), learned_from=("t",),
                              origin="learned")
    with pytest.raises(CycleError):
        add_control(goal_model, control, tags=("sl",))
    with pytest.raises(DslSyntaxError):
        add_control(goal_model, dataclasses.replace(control, id="fresh"), tags=())


# -- property: random models round-trip -------------------------------------------

_ids = st.from_regex(r"[a-z][a-z0-9_]{0,6}", fullmatch=True)
_statements = st.text(
    alphabet=st.characters(whitelist_categories=("L", "N", "Zs"), max_codepoint=0x2000),
    min_size=1, max_size=30,
).map(lambda s: s.strip() or "stmt")
_tags = st.lists(st.sampled_from(["sl", "wifi", "home", "d1", "t1"]), min_size=1,
                 max_size=3, unique=True).map(tuple)


@st.composite
def goal_models(draw):
    used: set[str] = set()

    def fresh(prefix: str) -> str:
        while True:
            candidate = f"{prefix}_{draw(_ids)}"
            if candidate not in used:
                used.add(candidate)
                return candidate

    nodes: dict[str, GoalNode] = {}
    assumptions: dict = {}
    controls: dict = {}

    def leaf() -> str:
        kind = draw(st.sampled_from(["requirement", "assumption-leaf", "control-leaf"]))
        tags = draw(_tags)
        statement = draw(_statements)
        if kind == "requirement":
            nid = fresh("r")
            nodes[nid] = GoalNode(nid, statement, kind, "none", (), tags,
                                  ex.parse_expr("never bad(x)"))
        elif kind == "assumption-leaf":
            nid = fresh("a")
            from adaptsec.goal_model import DomainAssumption
            params = draw(st.dictionaries(st.sampled_from(["k1", "k2"]),
                                          st.integers(0, 99), max_size=2))
            assumptions[nid] = DomainAssumption(nid, statement, ex.TrueExpr(),
                                                params, draw(st.booleans()))
            nodes[nid] = GoalNode(nid, statement, kind, "none", (), tags)
        else:
            nid = fresh("c")
            controls[nid] = SecurityControl(nid, ex.parse_expr("forbid open(X, sl) when X == d1"),
                                            "designed", "unknown", draw(st.booleans()),
                                            draw(_statements))
            nodes[nid] = GoalNode(nid, "", kind, "none", (), tags)
        return nid

    def goal(depth: int) -> str:
        nid = fresh("g")
        width = draw(st.integers(1, 2))
        children = tuple(
            leaf() if depth >= 1 or draw(st.booleans()) else goal(depth + 1)
            for _ in range(width)
        )
        nodes[nid] = GoalNode(nid, draw(_statements), "goal",
                              draw(st.sampled_from(["AND", "OR"])), children, ())
        return nid

    root = goal(0)
    return GoalModel(root=root, nodes=nodes, assumptions=assumptions, controls=controls)


@settings(max_examples=40, deadline=None,
          suppress_health_check=[HealthCheck.large_base_example, HealthCheck.too_slow])
@given(goal_models())
def test_random_model_round_trip(model):
    validate_model(model)
    text = serialize_goal_model(model)
    assert parse_goal_model(text) == model
