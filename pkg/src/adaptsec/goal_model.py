"""Goal refinement model: the security requirement, its AND/OR decomposition,
domain assumptions, and security controls.

Models are written in an indented, line-oriented format (two spaces per
level)::

    goal root "Authorised access to the smart home" AND
      req r_auth "No outsider inside unaccompanied" formal=(never in(outsider, home)) tags=home,sl
      goal g_lock "Authenticate access to the smart lock" AND
        control c_2fa constraint=(true) origin=designed enacted=true tags=sl
        assume d "Tenant locks up when leaving" formal=(after exit(tenant, home) require close(sl)) tags=tenant,home

A bare ``assume <id>`` or ``control <id>`` leaf references a declaration made
elsewhere in the file; an id that is never declared is a dangling reference.
Models are immutable: every evolution returns a new copy with the version
bumped and an EvolutionRecord appended, so prior versions stay intact.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from . import expr as ex
from .errors import (
    CycleError,
    DanglingReferenceError,
    DslSyntaxError,
    ParamTypeError,
    UnknownAssumptionError,
)

LEAF_KINDS = ("requirement", "control-leaf", "assumption-leaf")


@dataclass(frozen=True)
class GoalNode:
    id: str
    statement: str
    kind: str  # goal | requirement | control-leaf | assumption-leaf
    refinement: str = "none"  # AND | OR | none
    children: tuple[str, ...] = ()
    tags: tuple[str, ...] = ()
    formal: ex.Expr | None = None  # requirement leaves carry their property


@dataclass(frozen=True)
class DomainAssumption:
    id: str
    statement: str
    formal: ex.Expr
    params: dict = field(default_factory=dict)
    active: bool = True


@dataclass(frozen=True)
class SecurityControl:
    id: str
    constraint: ex.Expr
    origin: str = "designed"  # designed | learned | human-edited
    sustainability: str = "unknown"  # short-term | root-cause | unknown
    enacted: bool = False
    rationale: str = ""
    learned_from: tuple[str, ...] = ()


@dataclass(frozen=True)
class EvolutionRecord:
    assumption_id: str
    old_params: dict
    new_params: dict
    old_active: bool
    new_active: bool
    trigger: str
    approver_role: str
    version_from: int
    version_to: int


@dataclass(frozen=True)
class GoalModel:
    root: str
    nodes: dict
    assumptions: dict
    controls: dict
    version: int = 0
    # Evolution records are runtime lineage; the audit trail persists them,
    # the DSL file does not, so they stay out of structural equality.
    history: tuple[EvolutionRecord, ...] = field(default=(), compare=False)

    def requirement_expr(self) -> ex.Expr:
        for node in self.nodes.values():
            if node.kind == "requirement" and node.formal is not None:
                return node.formal
        raise DanglingReferenceError("model has no requirement leaf with a formal property")

    def active_assumption_exprs(self, drop: tuple[str, ...] = ()) -> tuple[ex.Expr, ...]:
        return tuple(
            a.formal for aid, a in sorted(self.assumptions.items())
            if a.active and aid not in drop
        )

    def enacted_control_exprs(self) -> tuple[ex.Expr, ...]:
        return tuple(c.constraint for cid, c in sorted(self.controls.items()) if c.enacted)


# --- operations ----------------------------------------------------------


def evolve_assumption(model: GoalModel, assumption_id: str, new_params: dict,
                      trigger: str = "", approver_role: str = "") -> GoalModel:
    """Return a new model version with the assumption's params updated.

    ``new_params`` may also carry the reserved key ``active`` to activate or
    deactivate the assumption; deactivation never deletes it.
    """
    assumption = model.assumptions.get(assumption_id)
    if assumption is None:
        raise UnknownAssumptionError(f"unknown assumption {assumption_id!r}")
    params = dict(assumption.params)
    active = assumption.active
    for key, value in new_params.items():
        if key == "active":
            if not isinstance(value, bool):
                raise ParamTypeError(f"active must be a boolean, got {value!r}")
            active = value
            continue
        if key not in params:
            raise ParamTypeError(f"assumption {assumption_id} declares no param {key!r}")
        if type(value) is not type(params[key]):
            raise ParamTypeError(
                f"param {key} of {assumption_id} is {type(params[key]).__name__}, got {value!r}"
            )
        params[key] = value
    record = EvolutionRecord(
        assumption_id=assumption_id,
        old_params=dict(assumption.params),
        new_params=dict(params),
        old_active=assumption.active,
        new_active=active,
        trigger=trigger,
        approver_role=approver_role,
        version_from=model.version,
        version_to=model.version + 1,
    )
    assumptions = dict(model.assumptions)
    assumptions[assumption_id] = replace(assumption, params=params, active=active)
    return replace(
        model,
        assumptions=assumptions,
        version=model.version + 1,
        history=model.history + (record,),
    )


def add_control(model: GoalModel, control: SecurityControl, tags: tuple[str, ...],
                parent: str | None = None) -> GoalModel:
    """Attach a (typically learned) control as a new leaf of the refinement."""
    parent_id = parent or model.root
    parent_node = model.nodes.get(parent_id)
    if parent_node is None or parent_node.kind != "goal":
        raise DanglingReferenceError(f"cannot attach control under {parent_id!r}")
    if control.id in model.nodes or control.id in model.controls:
        raise CycleError(f"control id {control.id} already present")
    if not tags:
        raise DslSyntaxError(f"control leaf {control.id} needs at least one tag")
    nodes = dict(model.nodes)
    nodes[parent_id] = replace(parent_node, children=parent_node.children + (control.id,))
    nodes[control.id] = GoalNode(id=control.id, statement="", kind="control-leaf", tags=tuple(tags))
    controls = dict(model.controls)
    controls[control.id] = control
    return replace(model, nodes=nodes, controls=controls, version=model.version + 1)


def set_control_enacted(model: GoalModel, control_id: str, enacted: bool) -> GoalModel:
    control = model.controls.get(control_id)
    if control is None:
        raise DanglingReferenceError(f"unknown control {control_id!r}")
    controls = dict(model.controls)
    controls[control_id] = replace(control, enacted=enacted)
    return replace(model, controls=controls, version=model.version + 1)


def affected_model_parts(model: GoalModel, anomaly) -> set[str]:
    """Ids of all nodes (hence assumptions/controls, which share their leaf's
    id) whose tags intersect the anomaly's tags."""
    tags = set(anomaly.tags if hasattr(anomaly, "tags") else anomaly)
    return {node.id for node in model.nodes.values() if tags & set(node.tags)}


# --- validation ----------------------------------------------------------


def validate_model(model: GoalModel) -> None:
    if model.root not in model.nodes:
        raise DanglingReferenceError(f"root {model.root!r} is not a node")
    seen: set[str] = set()

    def walk(node_id: str) -> None:
        if node_id in seen:
            raise CycleError(f"node {node_id} reached twice; refinement is not a tree")
        seen.add(node_id)
        node = model.nodes.get(node_id)
        if node is None:
            raise DanglingReferenceError(f"child {node_id!r} is not a node")
        if node.kind == "goal":
            if node.refinement not in ("AND", "OR") or not node.children:
                raise DslSyntaxError(f"goal {node_id} must be AND/OR refined with children")
        else:
            if node.kind not in LEAF_KINDS:
                raise DslSyntaxError(f"node {node_id} has unknown kind {node.kind!r}")
            if node.refinement != "none" or node.children:
                raise DslSyntaxError(f"leaf {node_id} cannot be refined")
            if not node.tags:
                raise DslSyntaxError(f"leaf {node_id} needs at least one tag")
        if node.kind == "assumption-leaf" and node.id not in model.assumptions:
            raise DanglingReferenceError(f"assumption {node.id!r} is referenced but never declared")
        if node.kind == "control-leaf" and node.id not in model.controls:
            raise DanglingReferenceError(f"control {node.id!r} is referenced but never declared")
        for child in node.children:
            walk(child)

    walk(model.root)
    stray = set(model.nodes) - seen
    if stray:
        raise CycleError(f"nodes not reachable from root: {sorted(stray)}")


# --- DSL parsing ----------------------------------------------------------

_ATTR_RE = re.compile(
    r'([a-z_]+)=("(?:[^"\\]|\\.)*"|\((?:[^()]|\([^()]*\))*\)|[^\s]+)'
)
_STMT_RE = re.compile(r'"((?:[^"\\]|\\.)*)"')


def _unquote(raw: str) -> str:
    return raw[1:-1].replace('\\"', '"').replace("\\\\", "\\")


def _parse_attrs(rest: str, line_no: int) -> tuple[str, dict]:
    """Split a leaf line's tail into (statement, {key: raw value})."""
    statement = ""
    m = _STMT_RE.match(rest)
    if m:
        statement = m.group(1).replace('\\"', '"')
        rest = rest[m.end():].strip()
    attrs: dict[str, str] = {}
    pos = 0
    while pos < len(rest):
        m = _ATTR_RE.match(rest, pos)
        if m is None:
            if rest[pos:].strip():
                raise DslSyntaxError(f"cannot parse attributes near {rest[pos:]!r}", line=line_no)
            break
        attrs[m.group(1)] = m.group(2)
        pos = m.end()
        while pos < len(rest) and rest[pos] == " ":
            pos += 1
    return statement, attrs


def _attr_expr(attrs: dict, key: str, line_no: int, default: ex.Expr | None = None) -> ex.Expr | None:
    raw = attrs.get(key)
    if raw is None:
        return default
    if raw.startswith("(") and raw.endswith(")"):
        raw = raw[1:-1]
    try:
        return ex.parse_expr(raw)
    except DslSyntaxError as err:
        raise DslSyntaxError(f"bad {key} expression: {err}", line=line_no)


def _attr_tags(attrs: dict) -> tuple[str, ...]:
    raw = attrs.get("tags", "")
    return tuple(t for t in raw.split(",") if t)


def _attr_bool(attrs: dict, key: str, default: bool, line_no: int) -> bool:
    raw = attrs.get(key)
    if raw is None:
        return default
    if raw not in ("true", "false"):
        raise DslSyntaxError(f"{key} must be true or false, got {raw!r}", line=line_no)
    return raw == "true"


def _attr_params(attrs: dict, line_no: int) -> dict:
    raw = attrs.get("params")
    if raw is None:
        return {}
    if raw.startswith("(") and raw.endswith(")"):
        raw = raw[1:-1]
    params: dict = {}
    for part in raw.split(","):
        if not part.strip():
            continue
        if ":" not in part:
            raise DslSyntaxError(f"param {part!r} must be key:value", line=line_no)
        key, value = (s.strip() for s in part.split(":", 1))
        params[key] = int(value) if re.fullmatch(r"-?\d+", value) else value
    return params


def parse_goal_model(text: str) -> GoalModel:
    entries: list[tuple[int, int, str, str, str]] = []  # (line_no, depth, kw, ident, rest)
    version = 0
    for line_no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.strip().startswith("#"):
            continue
        if raw.startswith("version "):
            version = int(raw.split()[1])
            continue
        indent = len(raw) - len(raw.lstrip(" "))
        if indent % 2 != 0:
            raise DslSyntaxError("indentation must be a multiple of two spaces", line=line_no)
        parts = raw.strip().split(None, 1)
        kw = parts[0]
        rest = parts[1] if len(parts) > 1 else ""
        if kw not in ("goal", "req", "control", "assume"):
            raise DslSyntaxError(f"unknown line keyword {kw!r}", line=line_no)
        ident_match = re.match(r"([A-Za-z_][A-Za-z0-9_-]*)\s*(.*)", rest, re.S)
        if ident_match is None:
            raise DslSyntaxError(f"{kw} line needs an identifier", line=line_no)
        entries.append((line_no, indent // 2, kw, ident_match.group(1), ident_match.group(2).strip()))

    if not entries:
        raise DslSyntaxError("empty goal model")

    nodes: dict[str, GoalNode] = {}
    assumptions: dict[str, DomainAssumption] = {}
    controls: dict[str, SecurityControl] = {}
    referenced: list[tuple[str, str, int]] = []  # (kind, id, line)
    root_id: str | None = None
    stack: list[str] = []  # node ids by depth

    for line_no, depth, kw, ident, rest in entries:
        refinement = ""
        if kw == "goal":
            m = re.search(r"(?:^|\s)(AND|OR)\s*$", rest)
            if m is None:
                raise DslSyntaxError(f"goal {ident} needs a trailing AND or OR", line=line_no)
            refinement = m.group(1)
            rest = rest[: m.start()].strip()
        statement, attrs = _parse_attrs(rest, line_no)
        tags = _attr_tags(attrs)

        if depth == 0 and root_id is not None:
            # Trailing top-level lines are standalone declarations, not nodes.
            if kw == "assume":
                assumptions[ident] = _make_assumption(ident, statement, attrs, line_no)
            elif kw == "control":
                controls[ident] = _make_control(ident, attrs, line_no)
            else:
                raise DslSyntaxError("only one root entry is allowed", line=line_no)
            continue

        if depth > len(stack):
            raise DslSyntaxError("child indented more than one level below its parent", line=line_no)
        del stack[depth:]
        if depth > 0:
            parent = nodes[stack[depth - 1]]
            if parent.kind != "goal":
                raise DslSyntaxError(f"leaf {parent.id} cannot have children", line=line_no)
            nodes[stack[depth - 1]] = replace(parent, children=parent.children + (ident,))

        if ident in nodes:
            raise CycleError(f"node {ident} appears twice; refinement is not a tree")

        if kw == "goal":
            nodes[ident] = GoalNode(ident, statement, "goal", refinement, (), tags)
        elif kw == "req":
            formal = _attr_expr(attrs, "formal", line_no)
            nodes[ident] = GoalNode(ident, statement, "requirement", "none", (), tags, formal)
        elif kw == "assume":
            if statement or "formal" in attrs:
                assumptions[ident] = _make_assumption(ident, statement, attrs, line_no)
            else:
                referenced.append(("assumption", ident, line_no))
            nodes[ident] = GoalNode(ident, statement, "assumption-leaf", "none", (), tags)
        elif kw == "control":
            if "constraint" in attrs:
                controls[ident] = _make_control(ident, attrs, line_no)
            else:
                referenced.append(("control", ident, line_no))
            nodes[ident] = GoalNode(ident, statement, "control-leaf", "none", (), tags)

        if depth == 0:
            root_id = ident
        stack.append(ident)

    for kind, ident, line_no in referenced:
        table = assumptions if kind == "assumption" else controls
        if ident not in table:
            raise DanglingReferenceError(f"{kind} {ident!r} is referenced but never declared (line {line_no})")

    model = GoalModel(root=root_id, nodes=nodes, assumptions=assumptions,
                      controls=controls, version=version)
    validate_model(model)
    return model


def _make_assumption(ident: str, statement: str, attrs: dict, line_no: int) -> DomainAssumption:
    formal = _attr_expr(attrs, "formal", line_no, default=ex.TrueExpr())
    return DomainAssumption(
        id=ident,
        statement=statement,
        formal=formal,
        params=_attr_params(attrs, line_no),
        active=_attr_bool(attrs, "active", True, line_no),
    )


def _make_control(ident: str, attrs: dict, line_no: int) -> SecurityControl:
    constraint = _attr_expr(attrs, "constraint", line_no)
    if constraint is None:
        raise DslSyntaxError(f"control {ident} needs a constraint", line=line_no)
    learned_raw = attrs.get("learned_from", "")
    rationale = attrs.get("rationale", "")
    if rationale.startswith('"'):
        rationale = _unquote(rationale)
    control = SecurityControl(
        id=ident,
        constraint=constraint,
        origin=attrs.get("origin", "designed"),
        sustainability=attrs.get("sustainability", "unknown"),
        enacted=_attr_bool(attrs, "enacted", False, line_no),
        rationale=rationale,
        learned_from=tuple(t for t in learned_raw.split(",") if t),
    )
    if control.origin == "learned" and not control.learned_from:
        raise DslSyntaxError(f"learned control {ident} must record learned_from traces", line=line_no)
    return control


# --- DSL serialization -----------------------------------------------------


def serialize_goal_model(model: GoalModel) -> str:
    lines: list[str] = []
    if model.version:
        lines.append(f"version {model.version}")
    emitted: set[str] = set()

    def quote(text: str) -> str:
        return '"%s"' % text.replace("\\", "\\\\").replace('"', '\\"')

    def emit(node_id: str, depth: int) -> None:
        node = model.nodes[node_id]
        pad = "  " * depth
        tags = f" tags={','.join(node.tags)}" if node.tags else ""
        if node.kind == "goal":
            lines.append(f"{pad}goal {node.id} {quote(node.statement)}{tags} {node.refinement}")
            for child in node.children:
                emit(child, depth + 1)
        elif node.kind == "requirement":
            formal = f" formal=({node.formal})" if node.formal is not None else ""
            lines.append(f"{pad}req {node.id} {quote(node.statement)}{formal}{tags}")
        elif node.kind == "assumption-leaf":
            lines.append(f"{pad}{_assumption_line(model.assumptions[node.id])}{tags}")
            emitted.add(node.id)
        elif node.kind == "control-leaf":
            lines.append(f"{pad}{_control_line(model.controls[node.id])}{tags}")
            emitted.add(node.id)

    emit(model.root, 0)
    for aid in sorted(model.assumptions):
        if aid not in emitted:
            lines.append(_assumption_line(model.assumptions[aid]))
    for cid in sorted(model.controls):
        if cid not in emitted:
            lines.append(_control_line(model.controls[cid]))
    return "\n".join(lines) + "\n"


def _assumption_line(a: DomainAssumption) -> str:
    quoted = a.statement.replace("\\", "\\\\").replace('"', '\\"')
    parts = [f'assume {a.id} "{quoted}"', f"formal=({a.formal})"]
    if a.params:
        inner = ",".join(f"{k}:{v}" for k, v in sorted(a.params.items()))
        parts.append(f"params=({inner})")
    if not a.active:
        parts.append("active=false")
    return " ".join(parts)


def _control_line(c: SecurityControl) -> str:
    parts = [f"control {c.id}", f"constraint=({c.constraint})", f"origin={c.origin}"]
    if c.sustainability != "unknown":
        parts.append(f"sustainability={c.sustainability}")
    if c.enacted:
        parts.append("enacted=true")
    if c.rationale:
        quoted = c.rationale.replace("\\", "\\\\").replace('"', '\\"')
        parts.append(f'rationale="{quoted}"')
    if c.learned_from:
        parts.append(f"learned_from={','.join(c.learned_from)}")
    return " ".join(parts)


def load_goal_model(path) -> GoalModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_goal_model(fh.read())
