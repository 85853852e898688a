"""Transition systems, guarded finite-state automata and their product.

States are small integers.  Every collection is kept in sorted order so that
serialized documents and DOT output are byte-stable.
"""
from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .formula import Formula, TRUE, atoms, holds, is_propositional, models, parse_ltl, to_text

MAX_PROPOSITIONS = 16
MAX_ENV_PROPS = 10

SCHEMA_FSA = "planverify.fsa/1"
SCHEMA_TS = "planverify.ts/1"


class AutomatonError(ValueError):
    pass


class PropositionMismatch(AutomatonError):
    pass


class TooManyEnvProps(AutomatonError):
    pass


Label = frozenset  # frozenset[str]


@dataclass(frozen=True)
class AtomicPropositionSet:
    names: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise AutomatonError(f"duplicate proposition names in {self.names}")
        if len(self.names) > MAX_PROPOSITIONS:
            raise AutomatonError(f"{len(self.names)} propositions exceed the limit of {MAX_PROPOSITIONS}")

    @classmethod
    def of(cls, names: Iterable[str]) -> "AtomicPropositionSet":
        return cls(tuple(sorted(set(names))))

    def __contains__(self, name: object) -> bool:
        return name in self.names

    def __iter__(self):
        return iter(self.names)

    def __len__(self) -> int:
        return len(self.names)

    def union(self, other: Iterable[str]) -> "AtomicPropositionSet":
        return AtomicPropositionSet.of(set(self.names) | set(other))


def _check_label(label: Iterable[str], ap: AtomicPropositionSet, where: str) -> None:
    unknown = set(label) - set(ap.names)
    if unknown:
        raise PropositionMismatch(f"{where} uses undeclared propositions {sorted(unknown)}")


@dataclass(frozen=True)
class TransitionSystem:
    """Environment model: states, a transition relation and a state labeling."""

    ap: AtomicPropositionSet
    states: tuple[int, ...]
    transitions: frozenset[tuple[int, int]]
    labels: Mapping[int, Label]

    def __post_init__(self):
        known = set(self.states)
        for s, t in self.transitions:
            if s not in known or t not in known:
                raise AutomatonError(f"transition ({s}, {t}) leaves the state set")
        for s in self.states:
            _check_label(self.labels.get(s, frozenset()), self.ap, f"TS state {s}")
        sources = {s for s, _ in self.transitions}
        dead = sorted(known - sources)
        if dead:
            raise AutomatonError(f"TS states without successors: {dead}")

    def label(self, q: int) -> Label:
        return self.labels.get(q, frozenset())

    def successors(self, q: int) -> list[int]:
        return sorted(t for s, t in self.transitions if s == q)


@dataclass(frozen=True)
class Edge:
    src: int
    guard: Formula
    dst: int


@dataclass(frozen=True)
class Fsa:
    """Plan automaton: labeled states, one initial state, guarded transitions."""

    ap: AtomicPropositionSet
    states: tuple[int, ...]
    initial: int
    edges: tuple[Edge, ...]
    labels: Mapping[int, Label] = field(default_factory=dict)

    def __post_init__(self):
        known = set(self.states)
        if self.initial not in known:
            raise AutomatonError(f"initial state {self.initial} is not a state")
        for e in self.edges:
            if e.src not in known or e.dst not in known:
                raise AutomatonError(f"edge {e.src}->{e.dst} leaves the state set")
            if not is_propositional(e.guard):
                raise AutomatonError(f"guard {to_text(e.guard)} is not propositional")
            _check_label(atoms(e.guard), self.ap, f"guard on {e.src}->{e.dst}")
        for s in self.states:
            _check_label(self.label(s), self.ap, f"FSA state {s}")

    def label(self, p: int) -> Label:
        return self.labels.get(p, frozenset())

    def out_edges(self, p: int) -> list[Edge]:
        return [e for e in self.edges if e.src == p]

    def guard_atoms(self) -> frozenset[str]:
        out: set[str] = set()
        for e in self.edges:
            out |= atoms(e.guard)
        return frozenset(out)

    def label_atoms(self) -> frozenset[str]:
        out: set[str] = set()
        for s in self.states:
            out |= self.label(s)
        return frozenset(out)

    def with_ap(self, ap: AtomicPropositionSet) -> "Fsa":
        """Same automaton declared over a larger proposition set."""
        return Fsa(ap, self.states, self.initial, self.edges, dict(self.labels))


@dataclass(frozen=True)
class ProductAutomaton:
    """Reachable part of ``A ⊗ TS``; states are ``(p, q)`` pairs."""

    ap: AtomicPropositionSet
    states: tuple[tuple[int, int], ...]
    initial: tuple[tuple[int, int], ...]
    succ: Mapping[tuple[int, int], tuple[tuple[int, int], ...]]
    labels: Mapping[tuple[int, int], Label]

    def successors(self, s: tuple[int, int]) -> tuple[tuple[int, int], ...]:
        return self.succ.get(s, ())

    def label(self, s: tuple[int, int]) -> Label:
        return self.labels[s]

    def transition_count(self) -> int:
        return sum(len(v) for v in self.succ.values())


def product(a: Fsa, ts: TransitionSystem) -> ProductAutomaton:
    """Synchronous product: a plan move is enabled when the environment's
    current label satisfies its guard, while the environment moves along
    one of its own transitions."""
    if a.ap != ts.ap:
        raise PropositionMismatch(f"automaton over {a.ap.names} but TS over {ts.ap.names}")
    ts_succ = {q: ts.successors(q) for q in ts.states}
    initial = tuple(sorted((a.initial, q) for q in ts.states))
    succ: dict[tuple[int, int], tuple[tuple[int, int], ...]] = {}
    seen = set(initial)
    queue = deque(initial)
    edges_by_src: dict[int, list[Edge]] = {}
    for e in a.edges:
        edges_by_src.setdefault(e.src, []).append(e)
    while queue:
        p, q = queue.popleft()
        env = ts.label(q)
        nxt = set()
        for e in edges_by_src.get(p, ()):
            if holds(e.guard, env):
                for q2 in ts_succ[q]:
                    nxt.add((e.dst, q2))
        succ[(p, q)] = tuple(sorted(nxt))
        for s in succ[(p, q)]:
            if s not in seen:
                seen.add(s)
                queue.append(s)
    states = tuple(sorted(seen))
    labels = {(p, q): frozenset(a.label(p) | ts.label(q)) for p, q in states}
    return ProductAutomaton(a.ap, states, initial, succ, labels)


def universal_ts(ap: AtomicPropositionSet, env_props: Iterable[str]) -> TransitionSystem:
    """Most permissive environment: every subset of ``env_props`` is a state
    and any state may follow any other."""
    env = sorted(set(env_props))
    if len(env) > MAX_ENV_PROPS:
        raise TooManyEnvProps(f"{len(env)} environment propositions exceed {MAX_ENV_PROPS}")
    _check_label(env, ap, "environment")
    labels = {}
    for i, bits in enumerate(itertools.product((False, True), repeat=len(env))):
        labels[i] = frozenset(n for n, b in zip(env, bits) if b)
    states = tuple(range(len(labels)))
    transitions = frozenset((s, t) for s in states for t in states)
    return TransitionSystem(ap, states, transitions, labels)


# --- isomorphism -----------------------------------------------------------------


def _guard_table(a: Fsa, over: Sequence[str]) -> dict[tuple[int, int], frozenset]:
    """Semantic guard (set of satisfying environment labels) per state pair."""
    table: dict[tuple[int, int], set] = {}
    for e in a.edges:
        table.setdefault((e.src, e.dst), set()).update(models(e.guard, over))
    return {k: frozenset(v) for k, v in table.items() if v}


def iso_check(a: Fsa, b: Fsa) -> bool:
    """True iff a bijection of states preserves the initial state, labels and
    the semantics of the guard between every ordered pair of states."""
    if a.ap != b.ap:
        raise PropositionMismatch("isomorphism requires a shared proposition set")
    if len(a.states) != len(b.states):
        return False
    over = sorted(a.guard_atoms() | b.guard_atoms())
    ga, gb = _guard_table(a, over), _guard_table(b, over)
    if sorted(map(len, ga.values())) != sorted(map(len, gb.values())):
        return False

    def signature(x: Fsa, g, s):
        outs = sorted(len(v) for (u, _), v in g.items() if u == s)
        ins = sorted(len(v) for (_, w), v in g.items() if w == s)
        return (x.label(s), tuple(outs), tuple(ins), (s, s) in g)

    sig_a = {s: signature(a, ga, s) for s in a.states}
    sig_b = {s: signature(b, gb, s) for s in b.states}
    if sorted(map(repr, sig_a.values())) != sorted(map(repr, sig_b.values())):
        return False

    order = [a.initial] + [s for s in a.states if s != a.initial]
    mapping: dict[int, int] = {}
    used: set[int] = set()

    def consistent(s: int, t: int) -> bool:
        for s2, t2 in mapping.items():
            if ga.get((s, s2)) != gb.get((t, t2)) or ga.get((s2, s)) != gb.get((t2, t)):
                return False
        return ga.get((s, s)) == gb.get((t, t))

    def extend(i: int) -> bool:
        if i == len(order):
            return True
        s = order[i]
        candidates = [b.initial] if s == a.initial else [t for t in b.states if t != b.initial]
        for t in candidates:
            if t in used or sig_a[s] != sig_b[t] or not consistent(s, t):
                continue
            mapping[s] = t
            used.add(t)
            if extend(i + 1):
                return True
            del mapping[s]
            used.discard(t)
        return False

    return extend(0)


# --- rendering and interchange -------------------------------------------------


def _dot_label(label: Iterable[str]) -> str:
    items = sorted(label)
    return "\\n".join(items) if items else "∅"


def fsa_to_dot(a: Fsa, name: str = "plan") -> str:
    lines = [f"digraph {json.dumps(name)} {{", "  rankdir=LR;", '  __start [shape=point, label=""];']
    for s in a.states:
        lines.append(f"  q{s} [shape=circle, label={json.dumps(_dot_label(a.label(s)))}];")
    lines.append(f"  __start -> q{a.initial};")
    for e in sorted(a.edges, key=lambda e: (e.src, e.dst, to_text(e.guard))):
        lines.append(f"  q{e.src} -> q{e.dst} [label={json.dumps(to_text(e.guard))}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def product_to_dot(pa: ProductAutomaton, name: str = "product") -> str:
    def node(s):
        return f"p{s[0]}_q{s[1]}"

    lines = [f"digraph {json.dumps(name)} {{", "  rankdir=LR;"]
    for s in pa.states:
        shape = "doublecircle" if s in pa.initial else "circle"
        lines.append(f"  {node(s)} [shape={shape}, label={json.dumps(_dot_label(pa.label(s)))}];")
    for s in pa.states:
        for t in pa.successors(s):
            lines.append(f"  {node(s)} -> {node(t)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def fsa_to_doc(a: Fsa) -> dict:
    return {
        "schema": SCHEMA_FSA,
        "ap": list(a.ap.names),
        "states": [{"id": s, "label": sorted(a.label(s))} for s in a.states],
        "initial": a.initial,
        "edges": [
            {"src": e.src, "guard": to_text(e.guard), "dst": e.dst}
            for e in sorted(a.edges, key=lambda e: (e.src, e.dst, to_text(e.guard)))
        ],
    }


def fsa_from_doc(doc: Mapping) -> Fsa:
    if doc.get("schema") != SCHEMA_FSA:
        raise AutomatonError(f"unsupported automaton schema {doc.get('schema')!r}")
    ap = AtomicPropositionSet(tuple(doc["ap"]))
    states = tuple(s["id"] for s in doc["states"])
    labels = {s["id"]: frozenset(s["label"]) for s in doc["states"]}
    edges = tuple(Edge(e["src"], parse_ltl(e["guard"]), e["dst"]) for e in doc["edges"])
    return Fsa(ap, states, doc["initial"], edges, labels)


def ts_to_doc(ts: TransitionSystem) -> dict:
    return {
        "schema": SCHEMA_TS,
        "ap": list(ts.ap.names),
        "states": [{"id": s, "label": sorted(ts.label(s))} for s in ts.states],
        "transitions": [list(t) for t in sorted(ts.transitions)],
    }


def ts_from_doc(doc: Mapping) -> TransitionSystem:
    if doc.get("schema") != SCHEMA_TS:
        raise AutomatonError(f"unsupported transition-system schema {doc.get('schema')!r}")
    ap = AtomicPropositionSet(tuple(doc["ap"]))
    states = tuple(s["id"] for s in doc["states"])
    labels = {s["id"]: frozenset(s["label"]) for s in doc["states"]}
    transitions = frozenset((int(s), int(t)) for s, t in doc["transitions"])
    return TransitionSystem(ap, states, transitions, labels)


def single_state_fsa(ap: AtomicPropositionSet, label: Iterable[str] = ()) -> Fsa:
    return Fsa(ap, (0,), 0, (Edge(0, TRUE, 0),), {0: frozenset(label)})
