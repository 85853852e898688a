import itertools

import pytest
from hypothesis import given, settings

from helpers import IF_ELSE_SNIPPET, SNIPPET_MAPPING, WHILE_SNIPPET, golden_if_else, golden_while
from test_plan_lang import programs
from planverify import corpus
from planverify.automata import AtomicPropositionSet, Edge, Fsa, iso_check
from planverify.formula import TRUE, Atom, Not, holds
from planverify.l2a import (
    InlineDepthExceeded, MappingRule, PropositionMapping, UnmappedApi, arg_matches, explain_mapping, l2a, substitute,
)
from planverify.plan_lang import CallStmt, FunctionDef, PlanAst, parse_plan, pretty_print

CARLA = corpus.mapping("carla")
TOY = PropositionMapping.from_doc({
    "schema": "planverify.mapping/1",
    "rules": [
        {"api": "ped", "kind": "sensor", "props": ["ped"]},
        {"api": "car", "kind": "sensor", "props": ["car"]},
        {"api": "light", "kind": "sensor", "props": ["light"]},
        {"api": "move", "props": ["move"]},
        {"api": "stop", "props": ["stop"]},
        {"api": "turn", "props": ["turn"]},
    ],
})


def compile_(src, mapping=CARLA, **kw):
    return l2a(parse_plan(src), mapping, **kw)


def chain(fsa):
    """Labels along a guard-free chain from the initial state to its terminal self-loop."""
    out, s, seen = [], fsa.initial, set()
    while s not in seen:
        seen.add(s)
        out.append(sorted(fsa.label(s)))
        (e,) = fsa.out_edges(s)
        assert e.guard == TRUE
        s = e.dst
    return out


def test_canonical_shapes():
    for src, golden in ((IF_ELSE_SNIPPET, golden_if_else), (WHILE_SNIPPET, golden_while)):
        fsa = compile_(src, SNIPPET_MAPPING)
        assert iso_check(fsa, golden(fsa.ap))


def test_sequence_ends_in_terminal_state():
    fsa = compile_("velocity_publisher(5, 0)\nsleep(1)\nstop()\n")
    assert chain(fsa) == [["move forward", "publish velocity"], [], ["stop"], []]


def test_for_loop_unrolled():
    fsa = compile_("for _ in range(3):\n    velocity_publisher(5, 0)\n")
    assert chain(fsa) == [["move forward", "publish velocity"]] * 3 + [[]]


def test_helper_inlined_with_argument_substitution():
    fsa = compile_("def go(v):\n    velocity_publisher(v, 0)\ngo(5)\ngo(-5)\n")
    assert chain(fsa) == [["move forward", "publish velocity"], ["move backward", "publish velocity"], []]


def test_code_after_return_is_unreachable():
    fsa = compile_("def f():\n    stop()\n    return\n    velocity_publisher(1, 0)\nf()\n")
    assert chain(fsa) == [["stop"], []]


def test_empty_plan_is_single_idle_state():
    fsa = compile_("")
    assert fsa.states == (0,) and fsa.edges == (Edge(0, TRUE, 0),) and fsa.label(0) == frozenset()


def test_trailing_branch_becomes_reactive_loop():
    fsa = compile_(corpus.plan_text("crossing.plan"))
    ped = Atom("pedestrian")
    golden = Fsa(fsa.ap, (0, 1, 2), 0,
                 (Edge(0, ped, 1), Edge(0, Not(ped), 2), Edge(1, TRUE, 0), Edge(2, TRUE, 0)),
                 {1: frozenset({"stop"}), 2: frozenset({"move forward", "publish velocity"})})
    assert iso_check(fsa, golden)


def test_unmapped_action_strict_and_permissive():
    with pytest.raises(UnmappedApi) as info:
        compile_("stop()\nteleport(3)\n")
    assert info.value.api == "teleport" and info.value.arguments == ("3",) and info.value.line == 2
    assert chain(compile_("teleport(3)\nstop()\n", permissive=True)) == [[], ["stop"], []]


def test_unmapped_sensor_always_rejected():
    with pytest.raises(UnmappedApi):
        compile_("if radar():\n    stop()\n", permissive=True)


def test_defaults_and_clears():
    fsa = compile_("set_velocity_ned(0, 0, 2, 0)\nset_velocity_ned(0, 0, -2, 0)\nset_velocity_ned(0, 0, 0, 0)\n",
                   corpus.mapping("px4"))
    assert chain(fsa) == [
        ["attitude limit", "descend"],
        ["climb", "landing speed < 1"],
        ["attitude limit", "hover", "landing speed < 1"],
        ["attitude limit", "landing speed < 1"],
    ]


def test_inline_depth_limit():
    funcs = tuple(FunctionDef(f"f{i}", (), (CallStmt(f"f{i + 1}"),)) for i in range(70))
    ast = PlanAst(funcs + (FunctionDef("f70", (), (CallStmt("stop"),)),), "f0")
    with pytest.raises(InlineDepthExceeded):
        l2a(ast, CARLA)


def test_explicit_proposition_set():
    ap = AtomicPropositionSet.of(CARLA.sensor_props() | CARLA.action_props())
    assert compile_("stop()\n", ap=ap).ap == ap


@given(programs())
@settings(max_examples=150, deadline=None)
def test_guards_are_mutually_exclusive(ast):
    fsa = l2a(ast, TOY)
    env = sorted(fsa.guard_atoms())
    for s in fsa.states:
        for bits in itertools.product((False, True), repeat=len(env)):
            label = frozenset(n for n, b in zip(env, bits) if b)
            enabled = sum(holds(e.guard, label) for e in fsa.out_edges(s))
            assert enabled <= 1
            if "while" not in pretty_print(ast):
                assert enabled == 1


@given(programs())
@settings(max_examples=100, deadline=None)
def test_labels_come_from_action_rules(ast):
    fsa = l2a(ast, TOY)
    assert fsa.label_atoms() <= TOY.action_props()
    assert fsa.guard_atoms() <= TOY.sensor_props()
    assert l2a(ast, TOY) == fsa


# --- mapping ----------------------------------------------------------------------------


@pytest.mark.parametrize("pattern, arg, expected", [
    ("*", "speed", True), ("zero", "0.0", True), ("zero", "1", False), ("pos", "2", True), ("neg", "-0.1", True),
    ("nonzero", "0", False), ("nonneg", "0", True), ("nonpos", "1", False), (">=1", "2.0", True),
    ("<=-1", "-0.5", False), ("=left", "left", True), ("pos", "speed", False),
])
def test_arg_patterns(pattern, arg, expected):
    assert arg_matches(pattern, arg) is expected


def test_first_matching_rule_wins():
    assert CARLA.lookup("velocity_publisher", ("0", "0")).props == ("stop",)
    assert CARLA.lookup("velocity_publisher", ("3", "0.5")).props == ("turn left", "publish velocity")
    assert CARLA.lookup("velocity_publisher", ("speed", "0")).props == ("publish velocity",)
    assert CARLA.lookup("fly", ()) is None


def test_mapping_round_trip_and_validation():
    for domain in corpus.DOMAINS:
        m = corpus.mapping(domain)
        assert PropositionMapping.from_doc(m.to_doc()) == m
    with pytest.raises(ValueError):
        MappingRule("x", ("p",), kind="neither")
    with pytest.raises(ValueError):
        PropositionMapping.from_doc({"schema": "other", "rules": []})


def test_substitute_whole_identifiers():
    assert substitute("v", {"v": "5"}) == "5"
    assert substitute("vv", {"v": "5"}) == "vv"
    assert substitute("-v", {"v": "5"}) == "-(5)"


def test_negated_parameter_keeps_its_sign():
    fsa = compile_("def back(v):\n    velocity_publisher(-v, 0)\nback(5)\nback(-2)\n")
    assert chain(fsa) == [["move backward", "publish velocity"], ["move forward", "publish velocity"], []]


def test_explain_mapping():
    ast = parse_plan("def go(v):\n    velocity_publisher(v, 0)\ngo(5)\nif car_observed():\n    stop()\n")
    sites = explain_mapping(ast, CARLA)
    assert [(s.api, s.line) for s, _ in sites] == [("velocity_publisher", 2), ("go", 3), ("stop", 5)]
    assert sites[-1][1] == {"stop"}
