"""Typed-STRIPS subset of PDDL: data model, parser, type checker and printer.

Supported: ``define``/``domain``/``problem``, ``:types`` with ``-`` supertypes,
``:predicates``, ``:action`` with ``:parameters``, ``:precondition`` and
``:effect`` (conjunctions of possibly negated atoms), ``:objects``, ``:init``
and conjunctive ``:goal``.  Keywords are case-insensitive, identifiers are
case-sensitive.  Anything else is rejected with a structured error.
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence, Union

ROOT_TYPE = "object"

Atom = tuple  # (predicate, arg1, arg2, ...)

_NAME_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_\-]*$")
_VAR_RE = re.compile(r"^\?[A-Za-z][A-Za-z0-9_\-]*$")

UNSUPPORTED_SECTIONS = {
    ":durative-action", ":functions", ":constants", ":derived", ":axiom",
    ":metric", ":constraints", ":process", ":event", ":length",
}
UNSUPPORTED_CONNECTIVES = {
    "or", "forall", "exists", "when", "imply", "=", "increase", "decrease",
    "assign", "scale-up", "scale-down", "preference",
}


class PDDLError(ValueError):
    """Base class for every structured parser or typing error."""


class PDDLSyntaxError(PDDLError):
    def __init__(self, message: str, position: tuple[int, int] | None = None,
                 expected: str | None = None):
        self.position = position
        self.expected = expected
        where = f" at line {position[0]}, column {position[1]}" if position else ""
        super().__init__(f"{message}{where}")


class PDDLTypeError(PDDLError):
    """Unknown or mismatched type, undeclared name, or wrong arity."""


class UnsupportedFeature(PDDLError):
    def __init__(self, feature: str, position: tuple[int, int] | None = None):
        self.feature = feature
        self.position = position
        where = f" at line {position[0]}, column {position[1]}" if position else ""
        super().__init__(f"unsupported PDDL feature {feature!r}{where}")


class DomainMismatchWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# data model


@dataclass(frozen=True)
class TypeTree:
    """Single-inheritance type hierarchy rooted at ``object``."""

    parent: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name in self.parent:
            seen = {name}
            t = name
            while t != ROOT_TYPE:
                t = self.parent.get(t)
                if t is None:
                    raise PDDLTypeError(f"type {name!r} does not reach {ROOT_TYPE!r}")
                if t in seen:
                    raise PDDLTypeError(f"cyclic type hierarchy through {name!r}")
                seen.add(t)

    @property
    def names(self) -> set[str]:
        return {ROOT_TYPE, *self.parent}

    def __contains__(self, name: str) -> bool:
        return name == ROOT_TYPE or name in self.parent

    def ancestors(self, t: str) -> list[str]:
        chain = [t]
        while t != ROOT_TYPE:
            t = self.parent[t]
            chain.append(t)
        return chain

    def is_subtype(self, t: str, of: str) -> bool:
        return t in self and of in self.ancestors(t)


@dataclass(frozen=True)
class PredicateSchema:
    name: str
    params: tuple[tuple[str, str], ...] = ()

    @property
    def arity(self) -> int:
        return len(self.params)


@dataclass(frozen=True)
class Literal:
    predicate: str
    args: tuple[str, ...] = ()
    positive: bool = True

    @property
    def atom(self) -> Atom:
        return (self.predicate, *self.args)

    def negate(self) -> "Literal":
        return Literal(self.predicate, self.args, not self.positive)

    def holds(self, atoms: Union[set, frozenset]) -> bool:
        return (self.atom in atoms) == self.positive

    def __str__(self) -> str:
        inner = "(" + " ".join((self.predicate, *self.args)) + ")"
        return inner if self.positive else f"(not {inner})"


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple[tuple[str, str], ...] = ()
    precondition: tuple[Literal, ...] = ()
    effect: tuple[Literal, ...] = ()


@dataclass(frozen=True)
class Domain:
    name: str
    type_tree: TypeTree = field(default_factory=TypeTree)
    predicates: tuple[PredicateSchema, ...] = ()
    actions: tuple[ActionSchema, ...] = ()

    def __post_init__(self):
        check_domain(self)

    @cached_property
    def predicate_map(self) -> dict[str, PredicateSchema]:
        return {p.name: p for p in self.predicates}

    @cached_property
    def action_map(self) -> dict[str, ActionSchema]:
        return {a.name: a for a in self.actions}


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    domain_name: str
    objects: Mapping[str, str] = field(default_factory=dict)
    init: frozenset = frozenset()
    goal: tuple[Literal, ...] = ()

    def with_goal(self, goal: Iterable[Literal]) -> "ProblemSpec":
        return ProblemSpec(self.name, self.domain_name, self.objects, self.init, tuple(goal))


# --------------------------------------------------------------------------
# type checking


def _check_types_exist(tree: TypeTree, params, where: str) -> None:
    names = [n for n, _ in params]
    if len(set(names)) != len(names):
        raise PDDLTypeError(f"duplicate parameter name in {where}")
    for n, t in params:
        if t not in tree:
            raise PDDLTypeError(f"unknown type {t!r} for {n} in {where}")


def check_domain(d: Domain) -> None:
    tree = d.type_tree
    preds: dict[str, PredicateSchema] = {}
    for p in d.predicates:
        if p.name in preds:
            raise PDDLTypeError(f"duplicate predicate {p.name!r}")
        _check_types_exist(tree, p.params, f"predicate {p.name!r}")
        preds[p.name] = p
    seen: set[str] = set()
    for a in d.actions:
        if a.name in seen:
            raise PDDLTypeError(f"duplicate action {a.name!r}")
        seen.add(a.name)
        _check_types_exist(tree, a.params, f"action {a.name!r}")
        scope = dict(a.params)
        for lit in (*a.precondition, *a.effect):
            schema = preds.get(lit.predicate)
            if schema is None:
                raise PDDLTypeError(f"undeclared predicate {lit.predicate!r} in action {a.name!r}")
            if len(lit.args) != schema.arity:
                raise PDDLTypeError(
                    f"{lit} in action {a.name!r}: expected {schema.arity} arguments, got {len(lit.args)}")
            for arg, (_, ptype) in zip(lit.args, schema.params):
                if arg not in scope:
                    raise PDDLTypeError(f"{lit} in action {a.name!r}: {arg!r} is not a parameter")
                if not tree.is_subtype(scope[arg], ptype):
                    raise PDDLTypeError(
                        f"{lit} in action {a.name!r}: {arg} - {scope[arg]} is not a {ptype}")
        pos = {l.atom for l in a.effect if l.positive}
        neg = {l.atom for l in a.effect if not l.positive}
        clash = pos & neg
        if clash:
            raise PDDLTypeError(f"action {a.name!r} both adds and deletes {sorted(clash)[0]}")


def check_atom(domain: Domain, objects: Mapping[str, str], atom: Sequence[str], where: str = "") -> None:
    pred, *args = atom
    schema = domain.predicate_map.get(pred)
    if schema is None:
        raise PDDLTypeError(f"undeclared predicate {pred!r}{where}")
    if len(args) != schema.arity:
        raise PDDLTypeError(
            f"({' '.join(atom)}){where}: expected {schema.arity} arguments, got {len(args)}")
    for arg, (_, ptype) in zip(args, schema.params):
        if arg not in objects:
            raise PDDLTypeError(f"undeclared object {arg!r} in ({' '.join(atom)}){where}")
        if not domain.type_tree.is_subtype(objects[arg], ptype):
            raise PDDLTypeError(
                f"type mismatch in ({' '.join(atom)}){where}: {arg} is {objects[arg]}, not {ptype}")


def check_problem(domain: Domain, problem: ProblemSpec) -> None:
    for name, t in problem.objects.items():
        if t not in domain.type_tree:
            raise PDDLTypeError(f"unknown type {t!r} for object {name!r}")
    for atom in problem.init:
        check_atom(domain, problem.objects, atom, " in :init")
    for lit in problem.goal:
        check_atom(domain, problem.objects, lit.atom, " in :goal")


# --------------------------------------------------------------------------
# s-expression reader


@dataclass(frozen=True)
class _Tok:
    text: str
    pos: tuple[int, int]

    @property
    def low(self) -> str:
        return self.text.lower()


class _List(list):
    pos: tuple[int, int] = (1, 1)


_TOKEN_RE = re.compile(r"\(|\)|;[^\n]*|[^\s();]+")


def _read(text: Union[str, bytes]) -> _List:
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise PDDLSyntaxError(f"input is not valid UTF-8 ({exc.reason})") from None
    line_starts = [0]
    for m in re.finditer("\n", text):
        line_starts.append(m.end())

    def position(offset: int) -> tuple[int, int]:
        lo, hi = 0, len(line_starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if line_starts[mid] <= offset:
                lo = mid
            else:
                hi = mid - 1
        return lo + 1, offset - line_starts[lo] + 1

    stack: list[_List] = []
    top: _List | None = None
    for m in _TOKEN_RE.finditer(text):
        tok = m.group()
        if tok.startswith(";"):
            continue
        pos = position(m.start())
        if top is not None and not stack:
            raise PDDLSyntaxError("unexpected text after the closing parenthesis", pos, "end of input")
        if tok == "(":
            node = _List()
            node.pos = pos
            if stack:
                stack[-1].append(node)
            stack.append(node)
        elif tok == ")":
            if not stack:
                raise PDDLSyntaxError("unbalanced ')'", pos, "'('")
            node = stack.pop()
            if not stack:
                top = node
        else:
            if not stack:
                raise PDDLSyntaxError(f"unexpected token {tok!r}", pos, "'('")
            stack[-1].append(_Tok(tok, pos))
    if stack:
        raise PDDLSyntaxError("unexpected end of input", position(len(text)), "')'")
    if top is None:
        raise PDDLSyntaxError("empty input", (1, 1), "'(define'")
    return top


def _pos(node) -> tuple[int, int]:
    return node.pos


def _tok(node, expected: str) -> _Tok:
    if not isinstance(node, _Tok):
        raise PDDLSyntaxError(f"expected {expected}, found a list", _pos(node), expected)
    return node


def _name(node, what: str = "a name") -> str:
    tok = _tok(node, what)
    if not _NAME_RE.match(tok.text):
        raise PDDLSyntaxError(f"invalid identifier {tok.text!r}", tok.pos, what)
    return tok.text


def _var(node) -> str:
    tok = _tok(node, "a variable")
    if not _VAR_RE.match(tok.text):
        raise PDDLSyntaxError(f"invalid variable {tok.text!r}", tok.pos, "a variable")
    return tok.text


def _keyword(node) -> str | None:
    return node.low if isinstance(node, _Tok) else None


def _typed_list(items, item_parser, end_pos) -> list[tuple[str, str]]:
    """Parse ``a b - T c - U d`` into [(a, T), (b, T), (c, U), (d, object)]."""
    out: list[tuple[str, str]] = []
    pending: list[str] = []
    i = 0
    while i < len(items):
        node = items[i]
        if isinstance(node, _Tok) and node.text == "-":
            if i + 1 >= len(items):
                raise PDDLSyntaxError("missing type after '-'", node.pos, "a type name")
            if not pending:
                raise PDDLSyntaxError("'-' without preceding names", node.pos, "a name")
            tnode = items[i + 1]
            if isinstance(tnode, _List):
                head = _keyword(tnode[0]) if tnode else None
                if head == "either":
                    raise UnsupportedFeature("either", tnode.pos)
            t = _name(tnode, "a type name")
            if t.lower() == ROOT_TYPE:
                t = ROOT_TYPE
            out.extend((n, t) for n in pending)
            pending = []
            i += 2
            continue
        pending.append(item_parser(node))
        i += 1
    out.extend((n, ROOT_TYPE) for n in pending)
    return out


def _header(root: _List, kind: str) -> tuple[str, list]:
    if not root or _keyword(root[0]) != "define":
        raise PDDLSyntaxError("expected (define ...)", root.pos, "'define'")
    if len(root) < 2 or not isinstance(root[1], _List) or len(root[1]) != 2:
        raise PDDLSyntaxError(f"expected ({kind} <name>)", root.pos, f"'({kind}'")
    head = root[1]
    if _keyword(head[0]) != kind:
        found = head[0].text if isinstance(head[0], _Tok) else "a list"
        raise PDDLSyntaxError(f"expected '{kind}', found {found!r}", head.pos, f"'{kind}'")
    name = _name(head[1], f"a {kind} name")
    sections = []
    for sec in root[2:]:
        if not isinstance(sec, _List) or not sec or _keyword(sec[0]) is None:
            raise PDDLSyntaxError("expected a section such as (:keyword ...)", _pos(sec), "'(:'")
        sections.append(sec)
    return name, sections


def _parse_literal(node, arg_parser, allow_negative: bool = True) -> Literal:
    if not isinstance(node, _List):
        raise PDDLSyntaxError(f"expected an atom, found {node.text!r}", node.pos, "'('")
    if not node:
        raise PDDLSyntaxError("empty atom", node.pos, "a predicate name")
    head = _keyword(node[0])
    if head == "not":
        if not allow_negative:
            raise PDDLSyntaxError("negative atom not allowed here", node.pos, "a positive atom")
        if len(node) != 2:
            raise PDDLSyntaxError("(not ...) takes exactly one atom", node.pos, "one atom")
        inner = _parse_literal(node[1], arg_parser, allow_negative=False)
        return inner.negate()
    if head in UNSUPPORTED_CONNECTIVES or head == "and":
        raise UnsupportedFeature(head if head != "and" else "nested and", node.pos)
    pred = _name(node[0], "a predicate name")
    return Literal(pred, tuple(arg_parser(a) for a in node[1:]))


def _parse_conjunction(node, arg_parser, allow_negative: bool = True) -> tuple[Literal, ...]:
    if not isinstance(node, _List):
        raise PDDLSyntaxError(f"expected a formula, found {node.text!r}", node.pos, "'('")
    if node and _keyword(node[0]) == "and":
        return tuple(_parse_literal(n, arg_parser, allow_negative) for n in node[1:])
    if not node:
        return ()
    return (_parse_literal(node, arg_parser, allow_negative),)


def _parse_action(sec: _List, types: TypeTree) -> ActionSchema:
    if len(sec) < 2:
        raise PDDLSyntaxError("action without a name", sec.pos, "an action name")
    name = _name(sec[1], "an action name")
    parts: dict[str, object] = {}
    i = 2
    while i < len(sec):
        key = _keyword(sec[i])
        if key not in (":parameters", ":precondition", ":effect"):
            node = sec[i]
            found = node.text if isinstance(node, _Tok) else "a list"
            if key and key.startswith(":"):
                raise UnsupportedFeature(key, node.pos)
            raise PDDLSyntaxError(f"unexpected {found!r} in action {name!r}", _pos(node),
                                  "':parameters', ':precondition' or ':effect'")
        if key in parts:
            raise PDDLSyntaxError(f"duplicate {key} in action {name!r}", sec[i].pos, "one occurrence")
        if i + 1 >= len(sec):
            raise PDDLSyntaxError(f"{key} without a value in action {name!r}", sec[i].pos, "'('")
        parts[key] = sec[i + 1]
        i += 2
    if ":effect" not in parts:
        raise PDDLSyntaxError(f"action {name!r} is missing required section :effect",
                              sec.pos, ":effect")
    params: list[tuple[str, str]] = []
    if ":parameters" in parts:
        pnode = parts[":parameters"]
        if not isinstance(pnode, _List):
            raise PDDLSyntaxError("expected a parameter list", pnode.pos, "'('")
        params = _typed_list(list(pnode), _var, pnode.pos)
    for _, t in params:
        if t not in types:
            raise PDDLTypeError(f"unknown type {t!r} in action {name!r}")
    pre = _parse_conjunction(parts[":precondition"], _var) if ":precondition" in parts else ()
    eff = _parse_conjunction(parts[":effect"], _var)
    return ActionSchema(name, tuple(params), pre, eff)


def parse_domain(text: Union[str, bytes]) -> Domain:
    root = _read(text)
    name, sections = _header(root, "domain")
    types_sec = preds_sec = None
    action_secs: list[_List] = []
    for sec in sections:
        key = _keyword(sec[0])
        if key == ":requirements":
            continue
        if key == ":types":
            if types_sec is not None:
                raise PDDLSyntaxError("duplicate :types section", sec.pos, "one :types section")
            types_sec = sec
        elif key == ":predicates":
            if preds_sec is not None:
                raise PDDLSyntaxError("duplicate :predicates section", sec.pos, "one :predicates section")
            preds_sec = sec
        elif key == ":action":
            action_secs.append(sec)
        elif key in UNSUPPORTED_SECTIONS:
            raise UnsupportedFeature(key, sec.pos)
        else:
            raise PDDLSyntaxError(f"unknown domain section {sec[0].text!r}", sec.pos,
                                  "':types', ':predicates' or ':action'")

    parent: dict[str, str] = {}
    if types_sec is not None:
        declared = _typed_list(list(types_sec[1:]), lambda n: _name(n, "a type name"), types_sec.pos)
        for t, p in declared:
            if t.lower() == ROOT_TYPE:
                continue
            if t in parent:
                raise PDDLTypeError(f"type {t!r} declared twice")
            parent[t] = p
        for t, p in parent.items():
            if p != ROOT_TYPE and p not in parent:
                raise PDDLTypeError(f"unknown type {p!r} declared as parent of {t!r}")
    tree = TypeTree(parent)

    predicates: list[PredicateSchema] = []
    if preds_sec is not None:
        for node in preds_sec[1:]:
            if not isinstance(node, _List) or not node:
                raise PDDLSyntaxError("expected a predicate declaration", _pos(node), "'('")
            pname = _name(node[0], "a predicate name")
            params = _typed_list(list(node[1:]), _var, node.pos)
            for _, t in params:
                if t not in tree:
                    raise PDDLTypeError(f"unknown type {t!r} in predicate {pname!r}")
            predicates.append(PredicateSchema(pname, tuple(params)))

    actions = [_parse_action(sec, tree) for sec in action_secs]
    return Domain(name, tree, tuple(predicates), tuple(actions))


def parse_problem(text: Union[str, bytes], domain: Domain, strict: bool = False) -> ProblemSpec:
    """Parse a problem and type-check it against ``domain``.

    A ``(:domain ...)`` name that differs from ``domain.name`` emits a
    :class:`DomainMismatchWarning`, or raises :class:`PDDLTypeError` when
    ``strict`` is set.
    """
    root = _read(text)
    name, sections = _header(root, "problem")
    domain_name = None
    objects: dict[str, str] = {}
    init: set = set()
    goal: tuple[Literal, ...] | None = None
    seen: set[str] = set()
    for sec in sections:
        key = _keyword(sec[0])
        if key in seen and key != ":requirements":
            raise PDDLSyntaxError(f"duplicate {key} section", sec.pos, f"one {key} section")
        seen.add(key)
        if key == ":requirements":
            continue
        if key == ":domain":
            if len(sec) != 2:
                raise PDDLSyntaxError("expected (:domain <name>)", sec.pos, "a domain name")
            node = sec[1]
            # tolerate the (:domain (name)) spelling
            if isinstance(node, _List) and len(node) == 1:
                node = node[0]
            domain_name = _name(node, "a domain name")
        elif key == ":objects":
            for oname, otype in _typed_list(list(sec[1:]), lambda n: _name(n, "an object name"), sec.pos):
                if oname in objects:
                    raise PDDLTypeError(f"object {oname!r} declared twice")
                if otype not in domain.type_tree:
                    raise PDDLTypeError(f"unknown type {otype!r} for object {oname!r}")
                objects[oname] = otype
        elif key == ":init":
            for node in sec[1:]:
                lit = _parse_literal(node, lambda n: _name(n, "an object name"), allow_negative=True)
                if not lit.positive:
                    raise PDDLSyntaxError("negative atoms are not allowed in :init (closed world)",
                                          _pos(node), "a positive atom")
                init.add(lit.atom)
        elif key == ":goal":
            if len(sec) != 2:
                raise PDDLSyntaxError("expected (:goal <formula>)", sec.pos, "one goal formula")
            goal = _parse_conjunction(sec[1], lambda n: _name(n, "an object name"))
        elif key in UNSUPPORTED_SECTIONS:
            raise UnsupportedFeature(key, sec.pos)
        else:
            raise PDDLSyntaxError(f"unknown problem section {sec[0].text!r}", sec.pos,
                                  "':domain', ':objects', ':init' or ':goal'")
    if domain_name is None:
        raise PDDLSyntaxError("problem is missing required section :domain", root.pos, ":domain")
    if goal is None:
        raise PDDLSyntaxError("problem is missing required section :goal", root.pos, ":goal")
    if domain_name != domain.name:
        msg = f"problem refers to domain {domain_name!r} but was checked against {domain.name!r}"
        if strict:
            raise PDDLTypeError(msg)
        warnings.warn(msg, DomainMismatchWarning, stacklevel=2)
    problem = ProblemSpec(name, domain_name, objects, frozenset(init), goal)
    check_problem(domain, problem)
    return problem


# --------------------------------------------------------------------------
# printing

_INDENT = "    "


def _typed(pairs: Sequence[tuple[str, str]]) -> str:
    return " ".join(f"{n} - {t}" for n, t in pairs)


def _block(literals: Sequence[Literal], depth: int) -> list[str]:
    pad = _INDENT * depth
    lines = ["(and"]
    lines += [f"{pad}{_INDENT}{lit}" for lit in literals]
    lines.append(f"{pad})")
    return lines


def print_domain(d: Domain) -> str:
    i1, i2 = _INDENT, _INDENT * 2
    out = [f"(define (domain {d.name})"]
    if d.type_tree.parent:
        groups: dict[str, list[str]] = {}
        for t, p in d.type_tree.parent.items():
            groups.setdefault(p, []).append(t)
        out.append(f"{i1}(:types")
        out += [f"{i2}{' '.join(ts)} - {p}" for p, ts in groups.items()]
        out.append(f"{i1})")
    out.append(f"{i1}(:predicates")
    for p in d.predicates:
        inner = " ".join([p.name, _typed(p.params)]).strip()
        out.append(f"{i2}({inner})")
    out.append(f"{i1})")
    for a in d.actions:
        out.append(f"{i1}(:action {a.name}")
        out.append(f"{i2}:parameters ({_typed(a.params)})")
        pre = _block(a.precondition, 2)
        out.append(f"{i2}:precondition {pre[0]}")
        out += pre[1:]
        eff = _block(a.effect, 2)
        out.append(f"{i2}:effect {eff[0]}")
        out += eff[1:]
        out.append(f"{i1})")
    out.append(")")
    return "\n".join(out) + "\n"


def print_problem(p: ProblemSpec) -> str:
    i1, i2 = _INDENT, _INDENT * 2
    out = [f"(define (problem {p.name})", f"{i1}(:domain {p.domain_name})", f"{i1}(:objects"]
    out += [f"{i2}{n} - {t}" for n, t in p.objects.items()]
    out.append(f"{i1})")
    out.append(f"{i1}(:init")
    out += [f"{i2}({' '.join(atom)})" for atom in sorted(p.init)]
    out.append(f"{i1})")
    goal = _block(p.goal, 1)
    out.append(f"{i1}(:goal {goal[0]}")
    out += goal[1:]
    out[-1] += ")"
    out.append(")")
    return "\n".join(out) + "\n"
