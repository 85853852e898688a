import pytest
from hypothesis import given, settings, strategies as st

from planverify.formula import (
    FALSE, TRUE, And, Always, Atom, Eventually, Implies, LtlSyntaxError, Next, Not, Or, Until,
    atoms, conj, count_temporal, disj, equivalent, holds, is_propositional, models, neg, parse_ltl, to_text,
)

NAMES = ("a", "b", "red light")


def formulas(temporal: bool = True):
    leaves = st.sampled_from([Atom(n) for n in NAMES] + [TRUE, FALSE])

    def extend(children):
        unary = [Not] + ([Next, Eventually, Always] if temporal else [])
        binary = [And, Or, Implies] + ([Until] if temporal else [])
        return st.one_of(
            st.builds(lambda op, f: op(f), st.sampled_from(unary), children),
            st.builds(lambda op, f, g: op(f, g), st.sampled_from(binary), children, children),
        )

    return st.recursive(leaves, extend, max_leaves=8)


@given(formulas())
@settings(max_examples=300)
def test_print_parse_round_trip(f):
    assert parse_ltl(to_text(f)) == f


@pytest.mark.parametrize("text, expected", [
    ("G a", Always(Atom("a"))),
    ("G a -> X !b", Implies(Always(Atom("a")), Next(Not(Atom("b"))))),
    ("a U b U a", Until(Atom("a"), Until(Atom("b"), Atom("a")))),
    ("a | b & a", Or(Atom("a"), And(Atom("b"), Atom("a")))),
    ('"red light" -> false', Implies(Atom("red light"), FALSE)),
    ("¬a ∧ b → a ∨ b", Implies(And(Not(Atom("a")), Atom("b")), Or(Atom("a"), Atom("b")))),
    ("F (a -> X b)", Eventually(Implies(Atom("a"), Next(Atom("b"))))),
])
def test_parse_examples(text, expected):
    assert parse_ltl(text) == expected


@pytest.mark.parametrize("text", ["", "G", "a &", "(a", "a b", '"open', "a -> -> b", "U a"])
def test_parse_errors(text):
    with pytest.raises(LtlSyntaxError):
        parse_ltl(text)


def test_atoms_and_counts():
    f = parse_ltl('G (pedestrian -> X !"publish velocity") & F a U b')
    assert atoms(f) == {"pedestrian", "publish velocity", "a", "b"}
    assert count_temporal(f) == 4
    assert not is_propositional(f)
    assert is_propositional(parse_ltl("a & !b"))


@given(formulas(temporal=False), st.frozensets(st.sampled_from(NAMES)))
def test_neg_conj_disj_semantics(f, label):
    g = Atom("a")
    assert holds(neg(f), label) == (not holds(f, label))
    assert holds(conj(f, g), label) == (holds(f, label) and holds(g, label))
    assert holds(disj(f, g), label) == (holds(f, label) or holds(g, label))


def test_models_and_equivalence():
    assert models(parse_ltl("a & !b"), ["a", "b"]) == {frozenset({"a"})}
    assert equivalent(parse_ltl("a -> b"), parse_ltl("!a | b"))
    assert not equivalent(parse_ltl("a"), parse_ltl("b"))
    assert conj() == TRUE and disj() == FALSE


def test_holds_rejects_temporal():
    with pytest.raises(ValueError):
        holds(parse_ltl("X a"), frozenset())
