"""Independent reference implementations used as test oracles."""
from __future__ import annotations

import itertools
import random
from functools import lru_cache

import numpy as np

from planverify.automata import AtomicPropositionSet, Edge, Fsa, TransitionSystem, product
from planverify.formula import (
    TRUE, And, Always, Atom, Eventually, Implies, Next, Not, Or, Until, count_temporal,
)
from planverify.l2a import PropositionMapping
from planverify.ltl import eval_lasso

AP2 = ("a", "b")


# --- brute-force lasso enumeration ------------------------------------------------------


def _succ(pa, s):
    out = pa.successors(s)
    return out if out else (s,)


def brute_force_holds(pa, phi, max_len: int = 8) -> bool:
    """True iff no lasso (prefix + cycle, total length <= max_len) of the
    product, with deadlocks extended by a self-loop, violates ``phi``."""
    labels = {s: pa.label(s) for s in pa.states}

    @lru_cache(maxsize=None)
    def ok(pre, cyc):
        return eval_lasso(phi, list(pre), list(cyc))

    stack = [[s] for s in pa.initial]
    while stack:
        path = stack.pop()
        last = path[-1]
        nxt = _succ(pa, last)
        for j, s in enumerate(path):
            if s in nxt:
                pre = tuple(labels[x] for x in path[:j])
                cyc = tuple(labels[x] for x in path[j:])
                if not ok(pre, cyc):
                    return False
        if len(path) < max_len:
            for t in nxt:
                stack.append(path + [t])
    return True


# --- random model-checking cases -----------------------------------------------------------


def random_guard(rng: random.Random):
    a, b = Atom("a"), Atom("b")
    return rng.choice([TRUE, TRUE, a, Not(a), b, Not(b), And(a, b), Or(a, Not(b))])


def random_formula(rng: random.Random, depth: int = 3, budget: int = 3):
    """Random LTL formula over ``a``/``b``/``x`` with at most ``budget`` temporal operators."""
    def go(d, left):
        if d == 0 or rng.random() < 0.25:
            return Atom(rng.choice(("a", "b", "x"))), left
        op = rng.choice(("not", "and", "or", "imp", "X", "F", "G", "U") if left > 0 else ("not", "and", "or", "imp"))
        if op in ("X", "F", "G"):
            f, left = go(d - 1, left - 1)
            return {"X": Next, "F": Eventually, "G": Always}[op](f), left
        if op == "not":
            f, left = go(d - 1, left)
            return Not(f), left
        if op == "U":
            left -= 1
        f, left = go(d - 1, left)
        g, left = go(d - 1, left)
        return {"and": And, "or": Or, "imp": Implies, "U": Until}[op](f, g), left

    phi, _ = go(depth, budget)
    assert count_temporal(phi) <= budget
    return phi


def random_case(rng: random.Random, max_states: int = 12):
    """Random plan automaton and environment whose reachable product has at most
    ``max_states`` states. Plan states are labeled with ``x``; the environment
    controls ``a`` and ``b``."""
    ap = AtomicPropositionSet.of(("a", "b", "x"))
    while True:
        n = rng.randint(1, 4)
        edges = []
        for p in range(n):
            for _ in range(rng.randint(0, 2)):
                edges.append(Edge(p, random_guard(rng), rng.randrange(n)))
        labels = {p: frozenset({"x"}) if rng.random() < 0.5 else frozenset() for p in range(n)}
        fsa = Fsa(ap, tuple(range(n)), 0, tuple(edges), labels)
        m = rng.randint(1, 3)
        env_labels = {q: frozenset(x for x in AP2 if rng.random() < 0.5) for q in range(m)}
        trans = {(q, rng.randrange(m)) for q in range(m)}
        trans |= {(rng.randrange(m), rng.randrange(m)) for _ in range(rng.randint(0, m))}
        ts = TransitionSystem(ap, tuple(range(m)), frozenset(trans), env_labels)
        pa = product(fsa, ts)
        if len(pa.states) <= max_states:
            return fsa, ts, pa


# --- calibration oracle ---------------------------------------------------------------------


def brute_guarantee(z_cal, y_safe, y_hat, z):
    """Empirical Pr[calibration sample has the nearest centroid's class |
    its distance to that centroid is at most d'], computed by direct counting."""
    z_cal = np.asarray(z_cal, dtype=float)
    y_safe = list(y_safe)
    y_hat = list(y_hat)
    cents = {}
    for k in (0, 1):
        rows = [z_cal[i] for i in range(len(y_safe)) if y_safe[i] == k and y_hat[i] == k]
        cents[k] = np.mean(rows, axis=0)
    d = {k: float(np.linalg.norm(np.asarray(z, dtype=float) - cents[k])) for k in (0, 1)}
    k = 1 if d[1] < d[0] else 0
    within = [i for i in range(len(y_safe)) if float(np.linalg.norm(z_cal[i] - cents[k])) <= d[k]]
    if not within:
        return 1.0, k
    wrong = sum(1 for i in within if y_safe[i] != k)
    return 1.0 - wrong / len(within), k


# --- two-blob data ------------------------------------------------------------------------------


def two_blobs(n: int, dim: int, seed: int, sep: float = 0.5, center_seed: int = 0):
    """Two Gaussian blobs at ``±sep * mu``; ``mu`` depends only on ``center_seed``."""
    mu = np.random.default_rng(center_seed).normal(size=dim)
    mu /= np.linalg.norm(mu)
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    rng.shuffle(y)
    x = rng.normal(scale=1 / np.sqrt(dim), size=(n, dim)) + np.where(y[:, None] == 1, mu, -mu) * sep
    return x, y


# --- canonical branch and loop snippets ------------------------------------------------------------------------

SNIPPET_MAPPING = PropositionMapping.from_doc({
    "schema": "planverify.mapping/1",
    "rules": [
        {"api": "sigma", "kind": "sensor", "props": ["sigma"]},
        {"api": "w1", "props": ["w1"]},
        {"api": "w2", "props": ["w2"]},
        {"api": "w3", "props": ["w3"]},
    ],
})

IF_ELSE_SNIPPET = "if sigma():\n    w1()\nelse:\n    w2()\n"
WHILE_SNIPPET = "while sigma():\n    w3()\n"


def golden_if_else(ap):
    s = Atom("sigma")
    return Fsa(ap, (0, 1, 2), 0,
               (Edge(0, s, 1), Edge(0, Not(s), 2), Edge(1, TRUE, 0), Edge(2, TRUE, 0)),
               {0: frozenset(), 1: frozenset({"w1"}), 2: frozenset({"w2"})})


def golden_while(ap):
    s = Atom("sigma")
    return Fsa(ap, (0, 1, 2), 0,
               (Edge(0, s, 1), Edge(1, s, 1), Edge(1, Not(s), 2), Edge(2, TRUE, 2)),
               {0: frozenset(), 1: frozenset({"w3"}), 2: frozenset()})


def all_labels(names):
    return [frozenset(c) for r in range(len(names) + 1) for c in itertools.combinations(names, r)]
