"""Compile plan syntax trees into plan automata.

Each construct is compiled against a *frontier*: the list of dangling
``(state, guard)`` exits that the next created state is attached to.

* action call: one state labeled with the mapped propositions
* ``sleep``, unmapped calls (permissive mode), sensor queries: one empty-labeled state
* assignment: nothing
* ``if c``: an empty hub with ``c`` into the then-branch and ``!c`` into the
  else-branch; an empty branch forwards the hub exit unchanged
* ``while c``: an empty hub with ``c`` into the body; the body loops back
  while ``c`` and exits on ``!c``
* ``for _ in range(n)``: the body unrolled ``n`` times
* helper calls: inlined with parameters substituted by the argument text

When the plan body ends in an ``if`` statement, its exits return to that
statement's hub, so the plan reads as a reactive control loop.  Otherwise the
exits enter a terminal empty state with a ``true`` self-loop.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .automata import AtomicPropositionSet, Edge, Fsa
from .formula import FALSE, TRUE, Atom, Bottom, Formula, atoms, conj, disj, neg
from .plan_lang import (
    BUILTIN_SLEEP,
    Assign,
    CallStmt,
    CondAnd,
    CondCall,
    CondConst,
    CondExpr,
    CondNot,
    CondOr,
    For,
    If,
    PlanAst,
    Return,
    Stmt,
    While,
    classify_number,
)

SCHEMA_MAPPING = "planverify.mapping/1"
MAX_INLINE_DEPTH = 64


class L2AError(ValueError):
    pass


class UnmappedApi(L2AError):
    def __init__(self, api: str, args: Sequence[str] = (), line: int = 0):
        super().__init__(f"no mapping rule matches {api}({', '.join(args)})" + (f" at line {line}" if line else ""))
        self.api = api
        self.arguments = tuple(args)
        self.line = line


class InlineDepthExceeded(L2AError):
    pass


# --- proposition mapping -------------------------------------------------------

_CMP = re.compile(r"(<=|>=|==|!=|<|>)\s*([+-]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)\Z")
_CLASSES = {
    "zero": lambda v: v == 0,
    "pos": lambda v: v > 0,
    "neg": lambda v: v < 0,
    "nonzero": lambda v: v != 0,
    "nonneg": lambda v: v >= 0,
    "nonpos": lambda v: v <= 0,
}
_OPS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


def _check_pattern(p: str) -> None:
    if p == "*" or p in _CLASSES or _CMP.match(p.replace(" ", "")) or p.startswith("="):
        return
    raise ValueError(f"unknown argument pattern {p!r}")


def arg_matches(pattern: str, arg: str) -> bool:
    """Match one argument against ``*``, a sign class, a comparison or ``=literal``."""
    if pattern == "*":
        return True
    if pattern.startswith("=") and not pattern.startswith("=="):
        return arg.strip() == pattern[1:].strip()
    value = classify_number(arg)
    if value is None:
        return False
    if pattern in _CLASSES:
        return _CLASSES[pattern](value)
    m = _CMP.match(pattern.replace(" ", ""))
    return bool(m) and _OPS[m.group(1)](value, float(m.group(2)))


@dataclass(frozen=True)
class MappingRule:
    api: str
    props: tuple[str, ...]
    kind: str = "action"  # "action" | "sensor"
    args: tuple[str, ...] | None = None  # None: any arguments
    clears: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("action", "sensor"):
            raise ValueError(f"rule for {self.api}: kind must be 'action' or 'sensor'")
        for p in self.args or ():
            _check_pattern(p)

    def matches(self, api: str, args: Sequence[str]) -> bool:
        if api != self.api:
            return False
        if self.args is None:
            return True
        return len(args) == len(self.args) and all(arg_matches(p, a) for p, a in zip(self.args, args))


@dataclass(frozen=True)
class PropositionMapping:
    """API-call to proposition correspondence, first matching rule wins."""

    rules: tuple[MappingRule, ...]
    defaults: tuple[str, ...] = ()
    name: str = ""

    @classmethod
    def from_doc(cls, doc: Mapping) -> "PropositionMapping":
        if doc.get("schema") != SCHEMA_MAPPING:
            raise ValueError(f"unsupported mapping schema {doc.get('schema')!r}")
        rules = []
        for r in doc["rules"]:
            args = r.get("args")
            rules.append(
                MappingRule(
                    api=r["api"],
                    props=tuple(r.get("props", ())),
                    kind=r.get("kind", "action"),
                    args=tuple(str(a) for a in args) if args is not None else None,
                    clears=tuple(r.get("clears", ())),
                )
            )
        return cls(tuple(rules), tuple(doc.get("defaults", ())), doc.get("name", ""))

    @classmethod
    def load(cls, path) -> "PropositionMapping":
        with open(path, encoding="utf-8") as fh:
            return cls.from_doc(json.load(fh))

    def to_doc(self) -> dict:
        rules = []
        for r in self.rules:
            d = {"api": r.api, "kind": r.kind, "props": list(r.props)}
            if r.args is not None:
                d["args"] = list(r.args)
            if r.clears:
                d["clears"] = list(r.clears)
            rules.append(d)
        doc = {"schema": SCHEMA_MAPPING, "rules": rules}
        if self.defaults:
            doc["defaults"] = list(self.defaults)
        if self.name:
            doc["name"] = self.name
        return doc

    def lookup(self, api: str, args: Sequence[str]) -> MappingRule | None:
        for r in self.rules:
            if r.matches(api, args):
                return r
        return None

    def apis(self, kind: str | None = None) -> frozenset[str]:
        return frozenset(r.api for r in self.rules if kind is None or r.kind == kind)

    def sensor_props(self) -> frozenset[str]:
        return frozenset(p for r in self.rules if r.kind == "sensor" for p in r.props)

    def action_props(self) -> frozenset[str]:
        return frozenset(p for r in self.rules if r.kind == "action" for p in r.props) | frozenset(self.defaults)

    def state_label(self, rule: MappingRule | None) -> frozenset[str]:
        base = set(self.defaults)
        if rule is not None and rule.kind == "action":
            base -= set(rule.clears)
            base |= set(rule.props)
        return frozenset(base)

    def coverage_gaps(self, action_apis: Sequence[str]) -> list[str]:
        """Declared action APIs that no rule mentions."""
        covered = self.apis()
        return [a for a in action_apis if a not in covered]


# --- compiler ------------------------------------------------------------------

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def substitute(arg: str, env: Mapping[str, str]) -> str:
    """Replace parameter identifiers in argument text by the caller's text."""
    if not env:
        return arg
    if arg.strip() in env:
        return env[arg.strip()]

    def repl(m: re.Match) -> str:
        name = m.group()
        return f"({env[name]})" if name in env else name

    return _IDENT.sub(repl, arg)


Exit = tuple[int, Formula]


@dataclass
class _Builder:
    ast: PlanAst
    mapping: PropositionMapping
    permissive: bool = False
    labels: list[frozenset] = field(default_factory=list)
    edges: dict[tuple[int, int], Formula] = field(default_factory=dict)
    edge_order: list[tuple[int, int]] = field(default_factory=list)

    def connect(self, src: int, guard: Formula, dst: int) -> None:
        if isinstance(guard, Bottom):
            return
        key = (src, dst)
        if key in self.edges:
            self.edges[key] = disj(self.edges[key], guard)
        else:
            self.edges[key] = guard
            self.edge_order.append(key)

    def new_state(self, label: frozenset, frontier: list[Exit]) -> int:
        sid = len(self.labels)
        self.labels.append(label)
        for src, g in frontier:
            self.connect(src, g, sid)
        return sid

    def empty_label(self) -> frozenset:
        return self.mapping.state_label(None)

    def guard(self, c: CondExpr, env: Mapping[str, str]) -> Formula:
        if isinstance(c, CondConst):
            return TRUE if c.value else FALSE
        if isinstance(c, CondNot):
            return neg(self.guard(c.operand, env))
        if isinstance(c, CondAnd):
            return conj(self.guard(c.left, env), self.guard(c.right, env))
        if isinstance(c, CondOr):
            return disj(self.guard(c.left, env), self.guard(c.right, env))
        args = tuple(substitute(a, env) for a in c.args)
        rule = self.mapping.lookup(c.target, args)
        if rule is None or rule.kind != "sensor" or not rule.props:
            # conditions are never approximated, even in permissive mode
            raise UnmappedApi(c.target, args)
        return conj(*(Atom(p) for p in rule.props))

    def block(self, stmts: Sequence[Stmt], frontier: list[Exit], env: Mapping[str, str],
              returns: list[Exit], depth: int) -> tuple[list[Exit], int | None]:
        """Compile ``stmts``; return the new frontier and the trailing ``if`` hub, if any."""
        tail_hub: int | None = None
        for s in stmts:
            if not frontier and self.labels:
                break  # unreachable code after return
            produced_before = len(self.labels)
            frontier, hub = self.stmt(s, frontier, env, returns, depth)
            if len(self.labels) != produced_before:
                tail_hub = hub
        return frontier, tail_hub

    def stmt(self, s: Stmt, frontier: list[Exit], env, returns, depth) -> tuple[list[Exit], int | None]:
        if isinstance(s, Assign):
            return frontier, None
        if isinstance(s, Return):
            returns.extend(frontier)
            return [], None
        if isinstance(s, CallStmt):
            return self.call(s, frontier, env, depth)
        if isinstance(s, If):
            g = self.guard(s.cond, env)
            hub = self.new_state(self.empty_label(), frontier)
            then_exits, _ = self.block(s.then, [(hub, g)], env, returns, depth)
            else_exits, _ = self.block(s.else_, [(hub, neg(g))], env, returns, depth)
            return _live(then_exits + else_exits), hub
        if isinstance(s, While):
            g = self.guard(s.cond, env)
            hub = self.new_state(self.empty_label(), frontier)
            entry_id = len(self.labels)
            body_exits, _ = self.block(s.body, [(hub, g)], env, returns, depth)
            entry = entry_id if len(self.labels) > entry_id else hub
            out: list[Exit] = []
            for src, eg in body_exits:
                self.connect(src, conj(eg, g), entry)
                out.append((src, conj(eg, neg(g))))
            return _live(out), None
        if isinstance(s, For):
            hub = None
            for _ in range(s.count):
                frontier, hub = self.block(s.body, frontier, env, returns, depth)
            return frontier, hub
        raise TypeError(f"unknown statement {s!r}")  # pragma: no cover

    def call(self, s: CallStmt, frontier, env, depth) -> tuple[list[Exit], int | None]:
        args = tuple(substitute(a, env) for a in s.args)
        fn = self.ast.function(s.target)
        if fn is not None:
            if depth >= MAX_INLINE_DEPTH:
                raise InlineDepthExceeded(f"inlining {s.target} exceeds depth {MAX_INLINE_DEPTH}")
            inner_env = dict(zip(fn.params, args))
            inner_returns: list[Exit] = []
            exits, hub = self.block(fn.body, frontier, inner_env, inner_returns, depth + 1)
            if inner_returns:
                hub = None
            return exits + inner_returns, hub
        if s.target == BUILTIN_SLEEP and self.mapping.lookup(s.target, args) is None:
            sid = self.new_state(self.empty_label(), frontier)
            return [(sid, TRUE)], None
        rule = self.mapping.lookup(s.target, args)
        if rule is None and not self.permissive:
            raise UnmappedApi(s.target, args, s.line)
        sid = self.new_state(self.mapping.state_label(rule), frontier)
        return [(sid, TRUE)], None


def _live(exits: list[Exit]) -> list[Exit]:
    return [(s, g) for s, g in exits if not isinstance(g, Bottom)]


def l2a(ast: PlanAst, mapping: PropositionMapping, permissive: bool = False,
        ap: AtomicPropositionSet | None = None) -> Fsa:
    """Compile ``ast`` (entry function) into a plan automaton.

    Raises :class:`UnmappedApi` for calls without a mapping rule (unless
    ``permissive``) and for any unmapped sensor in a condition.
    """
    b = _Builder(ast, mapping, permissive)
    entry = ast.entry_function
    body = entry.body if entry is not None else ()
    returns: list[Exit] = []
    exits, tail_hub = b.block(body, [], {}, returns, 0)
    if not b.labels:
        # nothing observable: a single idle state
        b.new_state(b.empty_label(), [])
        b.connect(0, TRUE, 0)
        exits, tail_hub, returns = [], None, []
    if returns:
        tail_hub = None
    exits = _live(exits + returns)
    if tail_hub is not None:
        for src, g in exits:
            b.connect(src, g, tail_hub)
    elif exits:
        end = b.new_state(b.empty_label(), exits)
        b.connect(end, TRUE, end)

    states = tuple(range(len(b.labels)))
    edges = tuple(Edge(src, b.edges[(src, dst)], dst) for src, dst in b.edge_order if not isinstance(b.edges[(src, dst)], Bottom))
    used = set(mapping.defaults)
    for lab in b.labels:
        used |= lab
    for e in edges:
        used |= atoms(e.guard)
    full = AtomicPropositionSet.of(used) if ap is None else ap
    labels = {s: lab for s, lab in enumerate(b.labels) if lab}
    return Fsa(full, states, 0, edges, labels)


@dataclass(frozen=True)
class CallSite:
    function: str
    line: int
    api: str
    args: tuple[str, ...]


def explain_mapping(ast: PlanAst, mapping: PropositionMapping) -> list[tuple[CallSite, frozenset[str]]]:
    """Propositions emitted by every call statement, in source order.

    Helper-function calls are listed with an empty set; unmapped calls too.
    """
    out: list[tuple[CallSite, frozenset[str]]] = []
    funcs = {f.name for f in ast.functions}

    def walk(fname: str, stmts: Sequence[Stmt]) -> None:
        for s in stmts:
            if isinstance(s, CallStmt):
                site = CallSite(fname, s.line, s.target, s.args)
                rule = None if s.target in funcs else mapping.lookup(s.target, s.args)
                props = frozenset(rule.props) if rule is not None else frozenset()
                out.append((site, props))
            elif isinstance(s, If):
                walk(fname, s.then)
                walk(fname, s.else_)
            elif isinstance(s, (While, For)):
                walk(fname, s.body)

    # source order: by line across functions
    for f in ast.functions:
        walk(f.name, f.body)
    out.sort(key=lambda item: item[0].line)
    return out
