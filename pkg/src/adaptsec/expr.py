"""Constraint expressions shared by the goal model, action domain, and trace search.

Textual grammar::

    rule  := "forbid" atom ["when" expr]
           | "after" atom "require" atom
           | "never" expr
           | expr
    expr  := conj ("or" conj)*
    conj  := unary ("and" unary)*
    unary := "not" unary | "(" rule ")" | "true" | comparison | atom
    atom  := name "(" term ("," term)* ")"
    comparison := term ("==" | "!=" | "<=" | ">=" | "<" | ">") term

Terms starting with an uppercase letter are variables; everything else is a
constant (identifier or integer).  Free variables of a state expression are
read existentially against the fact set, so ``opened_by(Y) and trusted(Y)``
holds when some device matches both.  Negation is negation-as-failure over
the variables bound so far.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Union

from .errors import DslSyntaxError, UnboundVariableError

Term = Union[str, int]
Fact = tuple  # ("in", "tenant", "home")
Binding = dict[str, Term]


def is_var(term: Term) -> bool:
    return isinstance(term, str) and len(term) > 0 and term[0].isupper()


# --- AST ---------------------------------------------------------------


@dataclass(frozen=True)
class TrueExpr:
    def __str__(self) -> str:
        return "true"


@dataclass(frozen=True)
class Lit:
    """Fluent literal, e.g. in(tenant, home)."""

    name: str
    args: tuple[Term, ...]

    def __str__(self) -> str:
        return f"{self.name}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class Cmp:
    lhs: Term
    op: str
    rhs: Term

    def __str__(self) -> str:
        return f"{self.lhs} {self.op} {self.rhs}"


@dataclass(frozen=True)
class Not:
    inner: "Expr"

    def __str__(self) -> str:
        if isinstance(self.inner, (And, Or, Never, Forbid, After)):
            return f"not ({self.inner})"
        return f"not {self.inner}"


@dataclass(frozen=True)
class And:
    items: tuple["Expr", ...]

    def __str__(self) -> str:
        return " and ".join(_paren(i) for i in self.items)


@dataclass(frozen=True)
class Or:
    items: tuple["Expr", ...]

    def __str__(self) -> str:
        return " or ".join(_paren(i, in_or=True) for i in self.items)


@dataclass(frozen=True)
class Never:
    """Safety requirement: no reachable state may satisfy ``inner``."""

    inner: "Expr"

    def __str__(self) -> str:
        return f"never {_paren(self.inner)}"


@dataclass(frozen=True)
class ActionPattern:
    """Action template with variables, e.g. open(X, sl)."""

    name: str
    args: tuple[Term, ...]

    @property
    def arity(self) -> int:
        return len(self.args)

    def __str__(self) -> str:
        return f"{self.name}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class Forbid:
    """Universally quantified rule: no occurrence of ``pattern`` where ``guard`` holds.

    The guard sees the pattern variables, the occurrence time as ``T``, and the
    state the action would fire in.
    """

    pattern: ActionPattern
    guard: "Expr" = field(default_factory=TrueExpr)

    def __str__(self) -> str:
        if isinstance(self.guard, TrueExpr):
            return f"forbid {self.pattern}"
        return f"forbid {self.pattern} when {self.guard}"


@dataclass(frozen=True)
class After:
    """Sequencing obligation: each occurrence of ``trigger`` must be followed
    immediately by ``required`` (if the trace continues)."""

    trigger: ActionPattern
    required: ActionPattern

    def __str__(self) -> str:
        return f"after {self.trigger} require {self.required}"


Expr = Union[TrueExpr, Lit, Cmp, Not, And, Or, Never, Forbid, After]


def _paren(e: Expr, in_or: bool = False) -> str:
    if isinstance(e, Or) or (in_or and isinstance(e, And)):
        return f"({e})"
    if isinstance(e, (Never, Forbid, After)):
        return f"({e})"
    return str(e)


# --- Parser ------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>-?\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>==|!=|<=|>=|<|>|[(),]))"
)

_KEYWORDS = {"and", "or", "not", "true", "never", "forbid", "when", "after", "require"}


class _Tokens:
    def __init__(self, text: str):
        self.text = text
        self.toks: list[tuple[str, Term, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                if text[pos:].strip() == "":
                    break
                raise DslSyntaxError(f"unexpected character {text[pos:].strip()[0]!r} in expression", column=pos)
            if m.group("num") is not None:
                self.toks.append(("num", int(m.group("num")), m.start()))
            elif m.group("name") is not None:
                self.toks.append(("name", m.group("name"), m.start()))
            else:
                self.toks.append(("op", m.group("op"), m.start()))
            pos = m.end()
        self.i = 0

    def peek(self) -> tuple[str, Term] | None:
        if self.i < len(self.toks):
            kind, val, _ = self.toks[self.i]
            return kind, val
        return None

    def next(self) -> tuple[str, Term]:
        tok = self.peek()
        if tok is None:
            raise DslSyntaxError("unexpected end of expression; expected a token", column=len(self.text))
        self.i += 1
        return tok

    def expect(self, kind: str, value: Term) -> None:
        tok = self.peek()
        if tok != (kind, value):
            got = "end of input" if tok is None else repr(tok[1])
            col = self.toks[self.i][2] if self.i < len(self.toks) else len(self.text)
            raise DslSyntaxError(f"expected {value!r}, got {got}", column=col)
        self.i += 1

    def done(self) -> bool:
        return self.i >= len(self.toks)


def parse_expr(text: str) -> Expr:
    toks = _Tokens(text)
    expr = _parse_rule(toks)
    if not toks.done():
        kind, val, col = toks.toks[toks.i]
        raise DslSyntaxError(f"trailing input {val!r} after expression", column=col)
    return expr


def _parse_rule(toks: _Tokens) -> Expr:
    tok = toks.peek()
    if tok == ("name", "forbid"):
        toks.next()
        pattern = _parse_pattern(toks)
        if toks.peek() == ("name", "when"):
            toks.next()
            guard = _parse_or(toks)
            return Forbid(pattern, guard)
        return Forbid(pattern)
    if tok == ("name", "after"):
        toks.next()
        trigger = _parse_pattern(toks)
        toks.expect("name", "require")
        required = _parse_pattern(toks)
        return After(trigger, required)
    if tok == ("name", "never"):
        toks.next()
        return Never(_parse_or(toks))
    return _parse_or(toks)


def _parse_pattern(toks: _Tokens) -> ActionPattern:
    kind, name = toks.next()
    if kind != "name" or name in _KEYWORDS:
        raise DslSyntaxError(f"expected an action name, got {name!r}")
    toks.expect("op", "(")
    args = _parse_terms(toks)
    return ActionPattern(name, tuple(args))


def _parse_terms(toks: _Tokens) -> list[Term]:
    args: list[Term] = []
    while True:
        kind, val = toks.next()
        if kind not in ("name", "num"):
            raise DslSyntaxError(f"expected a term, got {val!r}")
        args.append(val)
        kind, val = toks.next()
        if (kind, val) == ("op", ")"):
            return args
        if (kind, val) != ("op", ","):
            raise DslSyntaxError(f"expected ',' or ')' in argument list, got {val!r}")


def _parse_or(toks: _Tokens) -> Expr:
    items = [_parse_and(toks)]
    while toks.peek() == ("name", "or"):
        toks.next()
        items.append(_parse_and(toks))
    return items[0] if len(items) == 1 else Or(tuple(items))


def _parse_and(toks: _Tokens) -> Expr:
    items = [_parse_unary(toks)]
    while toks.peek() == ("name", "and"):
        toks.next()
        items.append(_parse_unary(toks))
    return items[0] if len(items) == 1 else And(tuple(items))


def _parse_unary(toks: _Tokens) -> Expr:
    tok = toks.peek()
    if tok is None:
        raise DslSyntaxError("unexpected end of expression")
    if tok == ("name", "not"):
        toks.next()
        return Not(_parse_unary(toks))
    if tok == ("op", "("):
        toks.next()
        inner = _parse_rule(toks)
        toks.expect("op", ")")
        return inner
    if tok == ("name", "true"):
        toks.next()
        return TrueExpr()
    kind, val = toks.next()
    if kind == "num":
        return _finish_cmp(toks, val)
    if val in _KEYWORDS:
        raise DslSyntaxError(f"unexpected keyword {val!r}")
    if toks.peek() == ("op", "("):
        toks.next()
        args = _parse_terms(toks)
        return Lit(str(val), tuple(args))
    return _finish_cmp(toks, val)


def _finish_cmp(toks: _Tokens, lhs: Term) -> Expr:
    tok = toks.peek()
    if tok is not None and tok[0] == "op" and tok[1] in ("==", "!=", "<=", ">=", "<", ">"):
        _, op = toks.next()
        kind, rhs = toks.next()
        if kind not in ("name", "num"):
            raise DslSyntaxError(f"expected a term after {op!r}, got {rhs!r}")
        return Cmp(lhs, str(op), rhs)
    raise DslSyntaxError(f"expected a comparison operator after {lhs!r}")


# --- Evaluation --------------------------------------------------------


def match_pattern(pattern: ActionPattern, name: str, args: tuple[str, ...],
                  binding: Binding | None = None) -> Binding | None:
    """Unify an action pattern with a ground action; None when they differ."""
    if pattern.name != name or len(pattern.args) != len(args):
        return None
    out: Binding = dict(binding) if binding else {}
    for pat_arg, arg in zip(pattern.args, args):
        if is_var(pat_arg):
            bound = out.get(pat_arg)
            if bound is None:
                out[str(pat_arg)] = arg
            elif bound != arg:
                return None
        elif str(pat_arg) != str(arg):
            return None
    return out


def solutions(facts: frozenset[Fact] | set[Fact], expr: Expr,
              binding: Binding | None = None) -> Iterator[Binding]:
    """Yield variable bindings under which ``expr`` holds over ``facts``.

    Ground expressions yield a single (possibly empty) binding when true.
    """
    binding = binding or {}
    if isinstance(expr, TrueExpr):
        yield binding
    elif isinstance(expr, Lit):
        for fact in facts:
            if fact[0] != expr.name or len(fact) - 1 != len(expr.args):
                continue
            out = dict(binding)
            ok = True
            for pat_arg, arg in zip(expr.args, fact[1:]):
                if is_var(pat_arg):
                    bound = out.get(pat_arg)
                    if bound is None:
                        out[str(pat_arg)] = arg
                    elif str(bound) != str(arg):
                        ok = False
                        break
                elif str(pat_arg) != str(arg):
                    ok = False
                    break
            if ok:
                yield out
    elif isinstance(expr, Cmp):
        if _cmp_holds(expr, binding):
            yield binding
    elif isinstance(expr, Not):
        for _ in solutions(facts, expr.inner, binding):
            return
        yield binding
    elif isinstance(expr, And):
        yield from _solutions_conj(facts, expr.items, binding)
    elif isinstance(expr, Or):
        seen: list[Binding] = []
        for item in expr.items:
            for sol in solutions(facts, item, binding):
                if sol not in seen:
                    seen.append(sol)
                    yield sol
    elif isinstance(expr, Never):
        # As a state expression, a safety property holds when its body does not.
        yield from solutions(facts, Not(expr.inner), binding)
    else:
        raise TypeError(f"{type(expr).__name__} is not a state expression")


def _solutions_conj(facts, items: tuple[Expr, ...], binding: Binding) -> Iterator[Binding]:
    if not items:
        yield binding
        return
    for sol in solutions(facts, items[0], binding):
        yield from _solutions_conj(facts, items[1:], sol)


def _resolve(term: Term, binding: Binding) -> Term:
    if is_var(term):
        if term not in binding:
            raise UnboundVariableError(f"variable {term} is unbound in comparison")
        return binding[str(term)]
    return term


def _cmp_holds(cmp: Cmp, binding: Binding) -> bool:
    lhs = _resolve(cmp.lhs, binding)
    rhs = _resolve(cmp.rhs, binding)
    try:
        lhs_n, rhs_n = int(lhs), int(rhs)
        lhs, rhs = lhs_n, rhs_n
    except (TypeError, ValueError):
        lhs, rhs = str(lhs), str(rhs)
        if cmp.op not in ("==", "!="):
            raise UnboundVariableError(
                f"ordered comparison {cmp} needs numeric terms, got {lhs!r}, {rhs!r}"
            )
    if cmp.op == "==":
        return lhs == rhs
    if cmp.op == "!=":
        return lhs != rhs
    if cmp.op == "<":
        return lhs < rhs
    if cmp.op == "<=":
        return lhs <= rhs
    if cmp.op == ">":
        return lhs > rhs
    return lhs >= rhs


def holds_in(facts: frozenset[Fact] | set[Fact], expr: Expr,
             binding: Binding | None = None) -> bool:
    """True when some solution of ``expr`` exists over ``facts``."""
    for _ in solutions(facts, expr, binding):
        return True
    return False
