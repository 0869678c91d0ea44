"""Smart-home action theory: entities, fluents, action schemas, and state transitions.

The domain is loaded from a line-oriented fixture file::

    agent tenant kind=tenant trust=trusted
    device d1 kind=net_device trust=unknown
    place home

    action open(D: net_device, L: lock)
      pre: connected(D) and locked(L)
      add: unlocked(L), opened_by(D)
      del: locked(L)

    init in(tenant, home), unlocked(sl), connected(d1)

States are immutable; ``step`` returns a new state with time advanced by one.
Static facts (entity kinds and trust marks) are kept outside the state and
joined in whenever an expression is evaluated.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from . import expr as ex
from .errors import (
    ArityMismatchError,
    DslSyntaxError,
    InapplicableActionError,
    UnknownSchemaError,
)

TRUST_LEVELS = ("trusted", "untrusted", "unknown")
ENTITY_KINDS = ("tenant", "outsider", "engineer", "net_device", "lock", "place")

# Param type annotations in schemas -> entity kinds they range over.
TYPE_KINDS: dict[str, frozenset[str]] = {
    "person": frozenset({"tenant", "outsider"}),
    "net_device": frozenset({"net_device"}),
    "lock": frozenset({"lock"}),
    "place": frozenset({"place"}),
    "device": frozenset({"net_device", "lock"}),
    "any": frozenset(ENTITY_KINDS),
}


@dataclass(frozen=True)
class Fluent:
    name: str
    args: tuple[str, ...]

    @property
    def fact(self) -> ex.Fact:
        return (self.name, *self.args)

    def __str__(self) -> str:
        return f"{self.name}({', '.join(self.args)})"


@dataclass(frozen=True)
class Action:
    name: str
    args: tuple[str, ...]

    @property
    def key(self) -> tuple[str, int]:
        return (self.name, len(self.args))

    def __str__(self) -> str:
        return f"{self.name}({','.join(self.args)})"


@dataclass(frozen=True)
class Entity:
    """Agent, device, or place in the smart home; trust marks drive the
    assumption guards (a net_device starts unknown until someone vouches)."""

    name: str
    kind: str
    trust: str = "unknown"


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple[tuple[str, str], ...]  # (var, type)
    precondition: ex.Expr
    adds: tuple[ex.Lit, ...] = ()
    deletes: tuple[ex.Lit, ...] = ()  # "*" argument deletes all matching facts
    searchable: bool = True

    @property
    def key(self) -> tuple[str, int]:
        return (self.name, len(self.params))


@dataclass(frozen=True)
class State:
    time: int
    facts: frozenset[ex.Fact]

    def with_facts(self, facts) -> "State":
        return State(self.time, frozenset(facts))


@dataclass(frozen=True)
class ActionDomain:
    entities: tuple[Entity, ...]
    schemas: tuple[ActionSchema, ...]
    init_facts: frozenset[ex.Fact]
    _schema_map: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_schema_map", {s.key: s for s in self.schemas})

    # -- views ----------------------------------------------------------

    def entity(self, name: str) -> Entity | None:
        for e in self.entities:
            if e.name == name:
                return e
        return None

    def static_facts(self) -> frozenset[ex.Fact]:
        facts: set[ex.Fact] = set()
        for e in self.entities:
            facts.add((e.kind, e.name))
            if e.kind in ("tenant", "outsider"):
                facts.add(("person", e.name))
            if e.trust == "trusted":
                facts.add(("trusted", e.name))
            elif e.trust == "untrusted":
                facts.add(("untrusted", e.name))
        return frozenset(facts)

    def initial_state(self) -> State:
        return State(0, self.init_facts)

    def with_trust(self, name: str, trust: str) -> "ActionDomain":
        if trust not in TRUST_LEVELS:
            raise ValueError(f"unknown trust level {trust!r}")
        entities = tuple(
            replace(e, trust=trust) if e.name == name else e for e in self.entities
        )
        return replace(self, entities=entities)

    def with_entity(self, entity: Entity) -> "ActionDomain":
        if self.entity(entity.name) is not None:
            return self.with_trust(entity.name, entity.trust)
        return replace(self, entities=self.entities + (entity,))

    def with_init(self, facts) -> "ActionDomain":
        return replace(self, init_facts=frozenset(facts))

    # -- grounding --------------------------------------------------------

    def ground_actions(self, searchable_only: bool = True) -> tuple[Action, ...]:
        """All ground actions, sorted by (name, args) for deterministic search."""
        out: list[Action] = []
        for schema in self.schemas:
            if searchable_only and not schema.searchable:
                continue
            out.extend(self._ground_schema(schema))
        out.sort(key=lambda a: (a.name, a.args))
        return tuple(out)

    def _ground_schema(self, schema: ActionSchema) -> list[Action]:
        pools: list[list[str]] = []
        for _, ptype in schema.params:
            kinds = TYPE_KINDS.get(ptype)
            if kinds is None:
                raise DslSyntaxError(f"unknown param type {ptype!r} in action {schema.name}")
            pools.append(sorted(e.name for e in self.entities if e.kind in kinds))
        groundings: list[Action] = []

        def rec(i: int, acc: tuple[str, ...]):
            if i == len(pools):
                groundings.append(Action(schema.name, acc))
                return
            for name in pools[i]:
                rec(i + 1, acc + (name,))

        rec(0, ())
        return groundings

    # -- semantics --------------------------------------------------------

    def schema_for(self, action: Action) -> ActionSchema:
        schema = self._schema_map.get(action.key)
        if schema is None:
            for s in self.schemas:
                if s.name == action.name:
                    raise ArityMismatchError(
                        f"action {action.name} takes {len(s.params)} args, got {len(action.args)}"
                    )
            raise UnknownSchemaError(f"unknown action schema {action.name}/{len(action.args)}")
        return schema

    def _binding(self, schema: ActionSchema, action: Action) -> ex.Binding:
        return {var: arg for (var, _), arg in zip(schema.params, action.args)}

    def applicable(self, state: State, action: Action) -> bool:
        """True iff the action's schema is known, its args fit the param types,
        and its precondition holds in ``state``."""
        schema = self.schema_for(action)
        for (_, ptype), arg in zip(schema.params, action.args):
            entity = self.entity(arg)
            if entity is None or entity.kind not in TYPE_KINDS[ptype]:
                return False
        context = state.facts | self.static_facts()
        return ex.holds_in(context, schema.precondition, self._binding(schema, action))

    def step(self, state: State, action: Action) -> State:
        """Apply an action: facts' = (facts - deletes) | adds, time' = time + 1."""
        if not self.applicable(state, action):
            raise InapplicableActionError(f"action {action} is not applicable", state.time + 1)
        schema = self.schema_for(action)
        binding = self._binding(schema, action)
        facts = set(state.facts)
        for pat in schema.deletes:
            if "*" in pat.args:
                ground = tuple(binding.get(str(a), a) for a in pat.args)
                facts = {
                    f for f in facts
                    if not (f[0] == pat.name and len(f) - 1 == len(ground)
                            and all(g == "*" or str(g) == str(v) for g, v in zip(ground, f[1:])))
                }
            else:
                facts.discard((pat.name, *(str(binding.get(str(a), a)) for a in pat.args)))
        for pat in schema.adds:
            facts.add((pat.name, *(str(binding.get(str(a), a)) for a in pat.args)))
        new_state = State(state.time + 1, frozenset(facts))
        validate_state(self, new_state)
        return new_state

    def holds(self, state: State, expression: ex.Expr) -> bool:
        """Evaluate a state expression against the state plus static facts."""
        return ex.holds_in(state.facts | self.static_facts(), expression)


def validate_state(domain: ActionDomain, state: State) -> None:
    """State sanity: one lock-status fluent per lock, one place per agent."""
    for e in domain.entities:
        if e.kind == "lock":
            statuses = [f for f in state.facts if f[0] in ("locked", "unlocked") and f[1] == e.name]
            if len(statuses) > 1:
                raise ValueError(f"lock {e.name} has conflicting status fluents {statuses}")
        if e.kind in ("tenant", "outsider"):
            places = [f for f in state.facts if f[0] == "in" and f[1] == e.name]
            if len(places) > 1:
                raise ValueError(f"agent {e.name} is in more than one place: {places}")


_ACTION_TEXT_RE = re.compile(r"^([a-z_][A-Za-z0-9_]*)\(([^()]*)\)$")


def parse_action(text: str) -> Action:
    """Ground action from text like ``open(d1,sl)``."""
    m = _ACTION_TEXT_RE.match(text.strip())
    if m is None:
        raise DslSyntaxError(f"cannot parse action {text!r}")
    args = tuple(a.strip() for a in m.group(2).split(",") if a.strip())
    return Action(m.group(1), args)


# --- fixture parsing -----------------------------------------------------


def parse_domain(text: str) -> ActionDomain:
    entities: list[Entity] = []
    schemas: list[ActionSchema] = []
    init_facts: set[ex.Fact] = set()
    seen_names: set[str] = set()

    lines = text.splitlines()
    i = 0
    while i < len(lines):
        raw = lines[i]
        line = raw.strip()
        i += 1
        if not line or line.startswith("#"):
            continue
        head, _, rest = line.partition(" ")
        if head in ("agent", "device", "place"):
            entities.append(_parse_entity(head, rest.strip(), i))
            if entities[-1].name in seen_names:
                raise DslSyntaxError(f"duplicate entity {entities[-1].name}", line=i)
            seen_names.add(entities[-1].name)
        elif head == "action":
            schema, i = _parse_action(rest.strip(), lines, i)
            if schema.key in {s.key for s in schemas}:
                raise DslSyntaxError(f"duplicate action {schema.name}/{len(schema.params)}", line=i)
            schemas.append(schema)
        elif head == "init":
            for part in _split_top_level(rest.strip()):
                fluent = _parse_ground_fluent(part, i)
                init_facts.add(fluent.fact)
        else:
            raise DslSyntaxError(f"unknown directive {head!r}", line=i)

    domain = ActionDomain(tuple(entities), tuple(schemas), frozenset(init_facts))
    _check_domain(domain)
    return domain


def load_domain(path) -> ActionDomain:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_domain(fh.read())


def _parse_entity(head: str, rest: str, line: int) -> Entity:
    parts = rest.split()
    if not parts:
        raise DslSyntaxError(f"{head} line needs a name", line=line)
    name = parts[0]
    attrs = dict(p.split("=", 1) for p in parts[1:] if "=" in p)
    if head == "place":
        kind = "place"
    else:
        kind = attrs.get("kind")
        if kind not in ENTITY_KINDS:
            raise DslSyntaxError(f"{head} {name} needs kind=<{'|'.join(ENTITY_KINDS)}>", line=line)
    trust = attrs.get("trust", "unknown")
    if trust not in TRUST_LEVELS:
        raise DslSyntaxError(f"unknown trust {trust!r} for {name}", line=line)
    return Entity(name, kind, trust)


_ACTION_HEADER_RE = re.compile(r"^([a-z_][A-Za-z0-9_]*)\((.*)\)$")
_EFFECT_RE = re.compile(r"^([a-z_][A-Za-z0-9_]*)\((.*)\)$")


def _parse_action(header: str, lines: list[str], i: int) -> tuple[ActionSchema, int]:
    searchable = True
    if header.endswith(" nosearch"):
        searchable = False
        header = header[: -len(" nosearch")].rstrip()
    m = _ACTION_HEADER_RE.match(header)
    if m is None:
        raise DslSyntaxError(f"bad action header {header!r}", line=i)
    name, inner = m.group(1), m.group(2)
    params: list[tuple[str, str]] = []
    if inner.strip():
        for part in inner.split(","):
            if ":" not in part:
                raise DslSyntaxError(f"param {part.strip()!r} needs a ': type' annotation", line=i)
            var, ptype = (s.strip() for s in part.split(":", 1))
            if not ex.is_var(var):
                raise DslSyntaxError(f"param {var!r} must start uppercase", line=i)
            if ptype not in TYPE_KINDS:
                raise DslSyntaxError(f"unknown param type {ptype!r}", line=i)
            params.append((var, ptype))

    pre: ex.Expr = ex.TrueExpr()
    adds: list[ex.Lit] = []
    dels: list[ex.Lit] = []
    while i < len(lines):
        body = lines[i].strip()
        if not body or body.startswith("#"):
            i += 1
            continue
        if not lines[i].startswith(" "):
            break
        key, _, value = body.partition(":")
        value = value.strip()
        if key == "pre":
            pre = ex.parse_expr(value)
        elif key in ("add", "del"):
            target = adds if key == "add" else dels
            for part in _split_top_level(value):
                target.append(_parse_effect(part, i + 1))
        else:
            raise DslSyntaxError(f"unknown action field {key!r}", line=i + 1)
        i += 1

    param_vars = {v for v, _ in params}
    for lit in adds + dels:
        for arg in lit.args:
            if ex.is_var(arg) and str(arg) not in param_vars:
                raise DslSyntaxError(f"effect variable {arg} not bound by params of {name}")
    return ActionSchema(name, tuple(params), pre, tuple(adds), tuple(dels), searchable), i


def _parse_effect(text: str, line: int) -> ex.Lit:
    m = _EFFECT_RE.match(text.strip())
    if m is None:
        raise DslSyntaxError(f"effect {text!r} must be a fluent", line=line)
    args = tuple(a.strip() for a in m.group(2).split(",") if a.strip())
    return ex.Lit(m.group(1), args)


def _parse_ground_fluent(text: str, line: int) -> Fluent:
    parsed = ex.parse_expr(text)
    if not isinstance(parsed, ex.Lit) or any(ex.is_var(a) for a in parsed.args):
        raise DslSyntaxError(f"init fact {text!r} must be ground", line=line)
    return Fluent(parsed.name, tuple(str(a) for a in parsed.args))


def _split_top_level(text: str) -> list[str]:
    """Split on commas that are not inside parentheses."""
    parts, depth, start = [], 0, 0
    for idx, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append(text[start:idx].strip())
            start = idx + 1
    tail = text[start:].strip()
    if tail:
        parts.append(tail)
    return parts


def _check_domain(domain: ActionDomain) -> None:
    names = {e.name for e in domain.entities}
    for fact in domain.init_facts:
        for arg in fact[1:]:
            if arg not in names:
                raise DslSyntaxError(f"init fact {fact} references unknown entity {arg!r}")
    validate_state(domain, domain.initial_state())
