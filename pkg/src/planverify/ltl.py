"""LTL model checking of plan automata inside an environment model.

The checker follows the textbook route: the negated specification is turned
into a generalized Büchi automaton by a closure (elementary set) tableau,
degeneralized with a round-robin counter, composed with the plan/environment
product, and searched for an accepting lasso with nested depth-first search.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .automata import Fsa, ProductAutomaton, PropositionMismatch, TransitionSystem, product
from .formula import (
    Always,
    And,
    Atom,
    Bottom,
    Eventually,
    Formula,
    Implies,
    Next,
    Not,
    Or,
    Top,
    Until,
    atoms,
    subformulas,
    to_text,
)

MAX_TABLEAU_BITS = 12


class FormulaTooLarge(ValueError):
    pass


# --- lasso semantics ----------------------------------------------------------


def eval_lasso(phi: Formula, prefix: Sequence[frozenset], cycle: Sequence[frozenset]) -> bool:
    """Truth of ``phi`` at position 0 of the word ``prefix · cycle^ω``.

    Each subformula is evaluated at the finitely many distinct positions;
    until and eventually are least fixpoints, always is a greatest fixpoint.
    """
    if not cycle:
        raise ValueError("lasso cycle must be non-empty")
    letters = list(prefix) + list(cycle)
    n = len(letters)
    loop = len(prefix)
    nxt = [i + 1 if i + 1 < n else loop for i in range(n)]
    val: dict[Formula, list[bool]] = {}

    for f in subformulas(phi):
        if isinstance(f, Atom):
            v = [f.name in letters[i] for i in range(n)]
        elif isinstance(f, Top):
            v = [True] * n
        elif isinstance(f, Bottom):
            v = [False] * n
        elif isinstance(f, Not):
            v = [not x for x in val[f.operand]]
        elif isinstance(f, And):
            a, b = val[f.left], val[f.right]
            v = [x and y for x, y in zip(a, b)]
        elif isinstance(f, Or):
            a, b = val[f.left], val[f.right]
            v = [x or y for x, y in zip(a, b)]
        elif isinstance(f, Implies):
            a, b = val[f.left], val[f.right]
            v = [(not x) or y for x, y in zip(a, b)]
        elif isinstance(f, Next):
            a = val[f.operand]
            v = [a[nxt[i]] for i in range(n)]
        elif isinstance(f, (Until, Eventually)):
            if isinstance(f, Until):
                a, b = val[f.left], val[f.right]
            else:
                a, b = [True] * n, val[f.operand]
            v = list(b)
            for _ in range(n):
                v = [b[i] or (a[i] and v[nxt[i]]) for i in range(n)]
        elif isinstance(f, Always):
            a = val[f.operand]
            v = list(a)
            for _ in range(n):
                v = [a[i] and v[nxt[i]] for i in range(n)]
        else:  # pragma: no cover
            raise TypeError(f"unknown formula node {f!r}")
        val[f] = v
    return val[phi][0]


# --- tableau -----------------------------------------------------------------------


def core(f: Formula) -> Formula:
    """Rewrite into the basis {atom, true, not, and, next, until}."""
    if isinstance(f, (Atom, Top)):
        return f
    if isinstance(f, Bottom):
        return Not(Top())
    if isinstance(f, Not):
        inner = core(f.operand)
        return inner.operand if isinstance(inner, Not) else Not(inner)
    if isinstance(f, And):
        return And(core(f.left), core(f.right))
    if isinstance(f, Or):
        return Not(And(_cneg(core(f.left)), _cneg(core(f.right))))
    if isinstance(f, Implies):
        return Not(And(core(f.left), _cneg(core(f.right))))
    if isinstance(f, Next):
        return Next(core(f.operand))
    if isinstance(f, Until):
        return Until(core(f.left), core(f.right))
    if isinstance(f, Eventually):
        return Until(Top(), core(f.operand))
    if isinstance(f, Always):
        return Not(Until(Top(), _cneg(core(f.operand))))
    raise TypeError(f"unknown formula node {f!r}")


def _cneg(f: Formula) -> Formula:
    return f.operand if isinstance(f, Not) else Not(f)


@dataclass(frozen=True)
class BuchiAutomaton:
    """State-labeled Büchi automaton.

    A run ``s0 s1 ...`` reads word ``w0 w1 ...`` when every ``letter[si]``
    agrees with ``wi`` on the relevant atoms.  States are integers.
    """

    relevant: frozenset[str]
    states: tuple[int, ...]
    initial: tuple[int, ...]
    letter: Mapping[int, frozenset[str]]
    succ: Mapping[int, tuple[int, ...]]
    accepting: frozenset[int]

    def matches(self, s: int, label: frozenset[str]) -> bool:
        return self.letter[s] == (label & self.relevant)


@dataclass
class _Tableau:
    closure: list[Formula]
    elementary: list[tuple[bool, ...]]
    index: dict[Formula, int] = field(default_factory=dict)


def _elementary_sets(phi: Formula) -> _Tableau:
    closure = subformulas(phi)
    index = {f: i for i, f in enumerate(closure)}
    basic = [f for f in closure if isinstance(f, (Atom, Next, Until))]
    if len(basic) > MAX_TABLEAU_BITS:
        raise FormulaTooLarge(
            f"{to_text(phi)}: {len(basic)} basic subformulas exceed 2^{MAX_TABLEAU_BITS} tableau states"
        )
    out: list[tuple[bool, ...]] = []
    vals = [False] * len(closure)

    def assign(i: int) -> None:
        if i == len(closure):
            out.append(tuple(vals))
            return
        f = closure[i]
        if isinstance(f, (Atom, Next)):
            choices = (False, True)
        elif isinstance(f, Top):
            choices = (True,)
        elif isinstance(f, Not):
            choices = (not vals[index[f.operand]],)
        elif isinstance(f, And):
            choices = (vals[index[f.left]] and vals[index[f.right]],)
        elif isinstance(f, Until):
            if vals[index[f.right]]:
                choices = (True,)
            elif not vals[index[f.left]]:
                choices = (False,)
            else:
                choices = (False, True)
        else:  # pragma: no cover
            raise TypeError(f"non-core node {f!r}")
        for c in choices:
            vals[i] = c
            assign(i + 1)

    assign(0)
    return _Tableau(closure, out, index)


def to_buchi(phi: Formula) -> BuchiAutomaton:
    """Büchi automaton accepting exactly the words satisfying ``phi``."""
    c = core(phi)
    tab = _elementary_sets(c)
    idx = tab.index
    nexts = [(idx[f], idx[f.operand]) for f in tab.closure if isinstance(f, Next)]
    untils = [(idx[f], idx[f.left], idx[f.right]) for f in tab.closure if isinstance(f, Until)]
    atom_pos = [(idx[f], f.name) for f in tab.closure if isinstance(f, Atom)]
    root = idx[c]
    elem = tab.elementary

    def step_ok(s: tuple[bool, ...], t: tuple[bool, ...]) -> bool:
        for x, y in nexts:
            if s[x] != t[y]:
                return False
        for u, a, b in untils:
            if s[u] != (s[b] or (s[a] and t[u])):
                return False
        return True

    # generalized acceptance: one set per until subformula
    acc_sets = [frozenset(i for i, s in enumerate(elem) if (not s[u]) or s[b]) for u, _, b in untils]
    k = len(acc_sets)
    gsucc = {i: [j for j, t in enumerate(elem) if step_ok(s, t)] for i, s in enumerate(elem)}

    # degeneralize: product with a counter over the acceptance sets
    copies = max(k, 1)
    def node(i: int, c_: int) -> int:
        return i * copies + c_

    initial = [node(i, 0) for i, s in enumerate(elem) if s[root]]
    succ: dict[int, tuple[int, ...]] = {}
    seen = set(initial)
    stack = list(initial)
    while stack:
        v = stack.pop()
        i, ctr = divmod(v, copies)
        nctr = (ctr + 1) % copies if k and i in acc_sets[ctr] else ctr
        out = tuple(sorted(node(j, nctr) for j in gsucc[i]))
        succ[v] = out
        for w in out:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    states = tuple(sorted(seen))
    if k:
        accepting = frozenset(v for v in states if v % copies == 0 and (v // copies) in acc_sets[0])
    else:
        accepting = frozenset(states)
    letter = {
        v: frozenset(name for pos, name in atom_pos if elem[v // copies][pos]) for v in states
    }
    return BuchiAutomaton(atoms(phi), states, tuple(sorted(initial)), letter, succ, accepting)


def accepts(ba: BuchiAutomaton, prefix: Sequence[frozenset], cycle: Sequence[frozenset]) -> bool:
    """Whether ``ba`` accepts the ultimately periodic word ``prefix · cycle^ω``."""
    letters = [frozenset(x) for x in list(prefix) + list(cycle)]
    n, loop = len(letters), len(prefix)
    nxt = [i + 1 if i + 1 < n else loop for i in range(n)]
    start = [(0, s) for s in ba.initial if ba.matches(s, letters[0])]

    def successors(v):
        i, s = v
        j = nxt[i]
        return [(j, t) for t in ba.succ[s] if ba.matches(t, letters[j])]

    def accepting(v):
        return v[1] in ba.accepting

    return _nested_dfs(start, successors, accepting) is not None


# --- nested DFS -------------------------------------------------------------------------


def _nested_dfs(initial, successors, accepting):
    """Return ``(path, cycle_start)`` for an accepting lasso, or ``None``.

    ``path`` lists the lasso states; the last state steps back to
    ``path[cycle_start]``.  Successors are explored in the given order, so the
    result is deterministic when ``successors`` is.
    """
    visited: set = set()
    flagged: set = set()
    on_stack: dict = {}

    for root in initial:
        if root in visited:
            continue
        visited.add(root)
        path = [root]
        on_stack[root] = 0
        iters = [iter(successors(root))]
        while iters:
            advanced = False
            for t in iters[-1]:
                if t not in visited:
                    visited.add(t)
                    on_stack[t] = len(path)
                    path.append(t)
                    iters.append(iter(successors(t)))
                    advanced = True
                    break
            if advanced:
                continue
            s = path[-1]
            if accepting(s):
                found = _inner_dfs(s, successors, flagged, on_stack)
                if found is not None:
                    inner_path, hit = found
                    j = on_stack[hit]
                    return path + inner_path, j
            iters.pop()
            path.pop()
            del on_stack[s]
    return None


def _inner_dfs(seed, successors, flagged, on_stack):
    path: list = []
    iters = [iter(successors(seed))]
    while iters:
        advanced = False
        for t in iters[-1]:
            if t in on_stack:
                return path, t
            if t not in flagged:
                flagged.add(t)
                path.append(t)
                iters.append(iter(successors(t)))
                advanced = True
                break
        if not advanced:
            iters.pop()
            if path:
                path.pop()
    return None


# --- model checking ---------------------------------------------------------------------


@dataclass(frozen=True)
class Lasso:
    prefix: tuple
    cycle: tuple

    def states(self) -> tuple:
        return self.prefix + self.cycle


@dataclass(frozen=True)
class Verdict:
    holds: bool
    counterexample: Lasso | None = None

    def __post_init__(self):
        if self.holds != (self.counterexample is None):
            raise ValueError("a counterexample is present exactly when the property fails")


def stutter_successors(pa: ProductAutomaton, s):
    """Successors with deadlocked states extended by a self-loop."""
    out = pa.successors(s)
    return out if out else (s,)


def check_product(pa: ProductAutomaton, phi: Formula) -> Verdict:
    unknown = atoms(phi) - set(pa.ap.names)
    if unknown:
        raise PropositionMismatch(f"specification uses undeclared propositions {sorted(unknown)}")
    ba = to_buchi(Not(phi))

    def successors(v):
        x, b = v
        out = []
        for x2 in stutter_successors(pa, x):
            lab = pa.label(x2)
            for b2 in ba.succ[b]:
                if ba.matches(b2, lab):
                    out.append((x2, b2))
        return sorted(out)

    initial = sorted(
        (x, b) for x in pa.initial for b in ba.initial if ba.matches(b, pa.label(x))
    )
    found = _nested_dfs(initial, successors, lambda v: v[1] in ba.accepting)
    if found is None:
        return Verdict(True)
    path, j = found
    sys_states = [x for x, _ in path]
    return Verdict(False, Lasso(tuple(sys_states[:j]), tuple(sys_states[j:])))


def model_check(a: Fsa, ts: TransitionSystem, phi: Formula) -> Verdict:
    """Decide whether every execution of ``a`` inside ``ts`` satisfies ``phi``."""
    return check_product(product(a, ts), phi)


def replay(pa: ProductAutomaton, lasso: Lasso) -> tuple[list[frozenset], list[frozenset]]:
    """Labels along a counterexample; raises if the lasso is not an execution."""
    seq = list(lasso.states())
    if not seq or seq[0] not in pa.initial:
        raise ValueError("lasso does not start in an initial state")
    for s, t in zip(seq, seq[1:] + [lasso.cycle[0]]):
        if t not in stutter_successors(pa, s):
            raise ValueError(f"{s} -> {t} is not a product transition")
    return [pa.label(s) for s in lasso.prefix], [pa.label(s) for s in lasso.cycle]


def lasso_to_doc(lasso: Lasso) -> dict:
    return {"prefix": [list(s) for s in lasso.prefix], "cycle": [list(s) for s in lasso.cycle]}


def verdict_to_doc(v: Verdict, pa: ProductAutomaton | None = None) -> dict:
    doc: dict = {"holds": v.holds, "counterexample": None}
    if v.counterexample is not None:
        doc["counterexample"] = lasso_to_doc(v.counterexample)
        if pa is not None:
            pre, cyc = replay(pa, v.counterexample)
            doc["counterexample"]["prefix_labels"] = [sorted(x) for x in pre]
            doc["counterexample"]["cycle_labels"] = [sorted(x) for x in cyc]
    return doc
