import random

import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_case
from planverify.automata import (
    AtomicPropositionSet, AutomatonError, Edge, Fsa, PropositionMismatch, TooManyEnvProps, TransitionSystem,
    fsa_from_doc, fsa_to_doc, fsa_to_dot, iso_check, product, product_to_dot, single_state_fsa, ts_from_doc,
    ts_to_doc, universal_ts,
)
from planverify.formula import TRUE, Atom, Next, Not, holds

AP = AtomicPropositionSet.of(("a", "b", "x"))
seeds = st.integers(min_value=0, max_value=10**6)


def test_ap_rejects_duplicates():
    with pytest.raises(AutomatonError):
        AtomicPropositionSet(("a", "a"))
    assert AtomicPropositionSet.of(["b", "a", "b"]).names == ("a", "b")


def test_fsa_validation():
    with pytest.raises(AutomatonError):
        Fsa(AP, (0,), 1, ())
    with pytest.raises(AutomatonError):
        Fsa(AP, (0,), 0, (Edge(0, TRUE, 3),))
    with pytest.raises(PropositionMismatch):
        Fsa(AP, (0,), 0, (Edge(0, Atom("zzz"), 0),))
    with pytest.raises(AutomatonError):
        Fsa(AP, (0,), 0, (Edge(0, Next(Atom("a")), 0),))
    with pytest.raises(PropositionMismatch):
        Fsa(AP, (0,), 0, (), {0: frozenset({"nope"})})


def test_ts_requires_successors():
    with pytest.raises(AutomatonError):
        TransitionSystem(AP, (0, 1), frozenset({(0, 1)}), {})


@given(seeds)
@settings(max_examples=150, deadline=None)
def test_product_matches_definition(seed):
    fsa, ts, pa = random_case(random.Random(seed), max_states=40)
    assert set(pa.initial) == {(fsa.initial, q) for q in ts.states}
    for (p, q) in pa.states:
        expect = {
            (e.dst, q2)
            for e in fsa.edges if e.src == p and holds(e.guard, ts.label(q))
            for (q1, q2) in ts.transitions if q1 == q
        }
        assert set(pa.successors((p, q))) == expect
        assert pa.label((p, q)) == fsa.label(p) | ts.label(q)
    # reachability closure
    reach, stack = set(pa.initial), list(pa.initial)
    while stack:
        for t in pa.successors(stack.pop()):
            if t not in reach:
                reach.add(t)
                stack.append(t)
    assert reach == set(pa.states)


def test_product_requires_shared_ap():
    fsa = single_state_fsa(AtomicPropositionSet.of(("a",)))
    ts = universal_ts(AP, ("a",))
    with pytest.raises(PropositionMismatch):
        product(fsa, ts)


def test_universal_ts():
    ts = universal_ts(AP, ("a", "b"))
    assert len(ts.states) == 4
    assert {ts.label(q) for q in ts.states} == {frozenset(), frozenset({"a"}), frozenset({"b"}), frozenset({"a", "b"})}
    assert len(ts.transitions) == 16
    big = AtomicPropositionSet.of([f"p{i}" for i in range(11)])
    with pytest.raises(TooManyEnvProps):
        universal_ts(big, big.names)


def _relabel(fsa: Fsa, perm: dict[int, int]) -> Fsa:
    return Fsa(fsa.ap, tuple(sorted(perm.values())), perm[fsa.initial],
               tuple(Edge(perm[e.src], e.guard, perm[e.dst]) for e in reversed(fsa.edges)),
               {perm[s]: fsa.label(s) for s in fsa.states})


@given(seeds)
@settings(max_examples=150, deadline=None)
def test_iso_invariant_under_renaming(seed):
    rng = random.Random(seed)
    fsa, _, _ = random_case(rng, max_states=40)
    targets = list(range(100, 100 + len(fsa.states)))
    rng.shuffle(targets)
    assert iso_check(fsa, _relabel(fsa, dict(zip(fsa.states, targets))))


def test_iso_uses_guard_semantics():
    a, b = Atom("a"), Atom("b")
    f1 = Fsa(AP, (0, 1), 0, (Edge(0, a, 1), Edge(1, TRUE, 0)), {1: frozenset({"x"})})
    f2 = Fsa(AP, (0, 1), 0, (Edge(0, Not(Not(a)), 1), Edge(1, a, 0), Edge(1, Not(a), 0)), {1: frozenset({"x"})})
    f3 = Fsa(AP, (0, 1), 0, (Edge(0, b, 1), Edge(1, TRUE, 0)), {1: frozenset({"x"})})
    f4 = Fsa(AP, (0, 1), 0, (Edge(0, a, 1), Edge(1, TRUE, 0)), {0: frozenset({"x"})})
    assert iso_check(f1, f2)
    assert not iso_check(f1, f3)
    assert not iso_check(f1, f4)


@given(seeds)
@settings(max_examples=80, deadline=None)
def test_doc_round_trips(seed):
    fsa, ts, _ = random_case(random.Random(seed), max_states=40)
    back = fsa_from_doc(fsa_to_doc(fsa))
    assert iso_check(fsa, back) and back.initial == fsa.initial
    assert ts_from_doc(ts_to_doc(ts)) == ts


def test_dot_output():
    fsa = Fsa(AP, (0, 1), 0, (Edge(0, Atom("a"), 1), Edge(1, TRUE, 1)), {1: frozenset({"x"})})
    dot = fsa_to_dot(fsa)
    assert dot.startswith('digraph "plan" {') and "q0 -> q1" in dot and '"x"' in dot
    pa = product(fsa, universal_ts(AP, ("a",)))
    assert "doublecircle" in product_to_dot(pa)
