import pytest

from adaptsec import expr as ex
from adaptsec.errors import DslSyntaxError, UnboundVariableError

FACTS = frozenset({
    ("in", "tenant", "home"),
    ("unlocked", "sl"),
    ("connected", "d1"),
    ("opened_by", "speaker"),
    ("trusted", "speaker"),
    ("net_device", "d1"),
    ("net_device", "speaker"),
})


@pytest.mark.parametrize("text", [
    "true",
    "in(tenant, home)",
    "not in(outsider, home)",
    "in(tenant, home) and unlocked(sl)",
    "locked(sl) or unlocked(sl)",
    "not (locked(sl) and in(tenant, home))",
    "X != d1",
    "T <= 4",
    "never in(outsider, home)",
    "forbid open(X, sl)",
    "forbid open(X, sl) when X == d1",
    "forbid open(X, sl) when net_device(X) and T <= 4",
    "after exit(tenant, home) require close(sl)",
    "(forbid open(X, sl) when net_device(X)) and (forbid close(X, sl) when net_device(X))",
    "in(A, P) and (not outsider(A) or not in(tenant, P))",
])
def test_parse_str_round_trip(text):
    parsed = ex.parse_expr(text)
    assert ex.parse_expr(str(parsed)) == parsed


def test_ground_literal_membership():
    assert ex.holds_in(FACTS, ex.parse_expr("in(tenant, home)"))
    assert not ex.holds_in(FACTS, ex.parse_expr("in(outsider, home)"))


def test_free_variables_are_existential():
    assert ex.holds_in(FACTS, ex.parse_expr("opened_by(Y) and trusted(Y)"))
    # d1 opened nothing, so conjoining on d1's identity fails
    assert not ex.holds_in(FACTS, ex.parse_expr("opened_by(Y) and Y == d1"))


def test_negation_as_failure_scopes_variables():
    assert ex.holds_in(FACTS, ex.parse_expr("not locked(sl)"))
    assert not ex.holds_in(FACTS, ex.parse_expr("not connected(X)"))  # some X is connected


def test_disjunction():
    assert ex.holds_in(FACTS, ex.parse_expr("locked(sl) or unlocked(sl)"))
    assert not ex.holds_in(FACTS, ex.parse_expr("locked(sl) or in(outsider, home)"))


def test_comparisons_bind_through_conjunction():
    assert ex.holds_in(FACTS, ex.parse_expr("net_device(X) and X != speaker"))
    assert not ex.holds_in(FACTS, ex.parse_expr("trusted(X) and X != speaker"))


def test_unbound_comparison_raises():
    with pytest.raises(UnboundVariableError):
        ex.holds_in(FACTS, ex.parse_expr("X == d1"))


def test_numeric_comparison():
    assert ex.holds_in(FACTS, ex.Cmp(3, "<=", 4))
    assert not ex.holds_in(FACTS, ex.Cmp(5, "<=", 4))


def test_match_pattern_unification():
    pattern = ex.ActionPattern("open", ("X", "sl"))
    assert ex.match_pattern(pattern, "open", ("d1", "sl")) == {"X": "d1"}
    assert ex.match_pattern(pattern, "open", ("sl",)) is None
    assert ex.match_pattern(pattern, "close", ("d1", "sl")) is None
    assert ex.match_pattern(pattern, "open", ("d1", "door")) is None


def test_match_pattern_repeated_variable():
    pattern = ex.ActionPattern("pair", ("X", "X"))
    assert ex.match_pattern(pattern, "pair", ("a", "a")) == {"X": "a"}
    assert ex.match_pattern(pattern, "pair", ("a", "b")) is None


@pytest.mark.parametrize("bad", [
    "open(X,",
    "forbid",
    "in(tenant, home) and",
    "never",
    "open(X, sl) garbage(Y)",
    "and in(tenant, home)",
])
def test_syntax_errors(bad):
    with pytest.raises(DslSyntaxError):
        ex.parse_expr(bad)


def test_forbid_guard_sees_time_variable():
    rule = ex.parse_expr("forbid open(X, sl) when X == d1 and T <= 4")
    binding = ex.match_pattern(rule.pattern, "open", ("d1", "sl"))
    binding["T"] = 3
    assert ex.holds_in(FACTS, rule.guard, binding)
    binding["T"] = 5
    assert not ex.holds_in(FACTS, rule.guard, dict(binding))


def test_never_treated_as_state_expression_is_complement():
    req = ex.parse_expr("never in(outsider, home)")
    assert ex.holds_in(FACTS, req)  # nobody unauthorised inside
    assert not ex.holds_in(FACTS | {("in", "outsider", "home")}, req)
