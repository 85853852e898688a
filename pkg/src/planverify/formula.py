"""Propositional and linear temporal logic formulas.

The same tree type serves two purposes: transition guards on compiled plan
automata (propositional fragment only) and temporal specifications checked
by :mod:`planverify.ltl`.

Surface syntax accepted by :func:`parse_ltl`::

    G F X          unary temporal operators
    U              binary until (right associative)
    ! & | ->       negation, conjunction, disjunction, implication
    true false     constants
    "red light"    quoted atom (any text without a double quote)
    pedestrian     bare atom

Unary operators bind tighter than ``U``, which binds tighter than ``&``,
then ``|``, then ``->`` (right associative).  Unicode ``¬ ∧ ∨ →`` are
accepted as aliases.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Iterator


class Formula:
    """Base class of all formula nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True)
class Atom(Formula):
    name: str


@dataclass(frozen=True)
class Top(Formula):
    pass


@dataclass(frozen=True)
class Bottom(Formula):
    pass


@dataclass(frozen=True)
class Not(Formula):
    operand: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Next(Formula):
    operand: Formula


@dataclass(frozen=True)
class Eventually(Formula):
    operand: Formula


@dataclass(frozen=True)
class Always(Formula):
    operand: Formula


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula


TRUE = Top()
FALSE = Bottom()

_UNARY = (Not, Next, Eventually, Always)
_BINARY = (And, Or, Implies, Until)
_TEMPORAL = (Next, Eventually, Always, Until)


class LtlSyntaxError(SyntaxError):
    """Raised when formula text does not match the grammar."""

    def __init__(self, message: str, text: str, pos: int):
        super().__init__(f"{message} at position {pos}")
        self.text = text
        self.pos = pos
        self.offset = pos + 1


class NotPropositional(ValueError):
    pass


def children(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, _UNARY):
        return (f.operand,)
    if isinstance(f, _BINARY):
        return (f.left, f.right)
    return ()


def subformulas(f: Formula) -> list[Formula]:
    """Distinct subformulas in post-order (children before parents)."""
    seen: dict[Formula, None] = {}

    def walk(g: Formula) -> None:
        for c in children(g):
            walk(c)
        if g not in seen:
            seen[g] = None

    walk(f)
    return list(seen)


def atoms(f: Formula) -> frozenset[str]:
    return frozenset(g.name for g in subformulas(f) if isinstance(g, Atom))


def is_propositional(f: Formula) -> bool:
    return not any(isinstance(g, _TEMPORAL) for g in subformulas(f))


def count_temporal(f: Formula) -> int:
    """Number of temporal operator occurrences in ``f``."""
    own = 1 if isinstance(f, _TEMPORAL) else 0
    return own + sum(count_temporal(c) for c in children(f))


def holds(f: Formula, label: Iterable[str] | frozenset[str]) -> bool:
    """Evaluate a propositional formula against a set of true atoms."""
    if not isinstance(label, (set, frozenset)):
        label = frozenset(label)
    return _holds(f, label)


def _holds(f: Formula, label: frozenset[str]) -> bool:
    if isinstance(f, Atom):
        return f.name in label
    if isinstance(f, Top):
        return True
    if isinstance(f, Bottom):
        return False
    if isinstance(f, Not):
        return not _holds(f.operand, label)
    if isinstance(f, And):
        return _holds(f.left, label) and _holds(f.right, label)
    if isinstance(f, Or):
        return _holds(f.left, label) or _holds(f.right, label)
    if isinstance(f, Implies):
        return (not _holds(f.left, label)) or _holds(f.right, label)
    raise NotPropositional(f"temporal operator in guard: {to_text(f)}")


def models(f: Formula, over: Iterable[str] | None = None) -> frozenset[frozenset[str]]:
    """All subsets of ``over`` (default: atoms of ``f``) satisfying ``f``."""
    names = sorted(set(over) if over is not None else atoms(f))
    out = set()
    for bits in itertools.product((False, True), repeat=len(names)):
        label = frozenset(n for n, b in zip(names, bits) if b)
        if _holds(f, label):
            out.add(label)
    return frozenset(out)


def equivalent(f: Formula, g: Formula) -> bool:
    over = atoms(f) | atoms(g)
    return models(f, over) == models(g, over)


def is_tautology(f: Formula) -> bool:
    return len(models(f)) == 2 ** len(atoms(f))


# --- smart constructors (light simplification for compiled guards) ---------


def neg(f: Formula) -> Formula:
    if isinstance(f, Top):
        return FALSE
    if isinstance(f, Bottom):
        return TRUE
    if isinstance(f, Not):
        return f.operand
    return Not(f)


def conj(*fs: Formula) -> Formula:
    parts: list[Formula] = []
    for f in fs:
        if isinstance(f, Bottom):
            return FALSE
        if isinstance(f, Top) or f in parts:
            continue
        if neg(f) in parts:
            return FALSE
        parts.append(f)
    if not parts:
        return TRUE
    return reduce(And, parts)


def disj(*fs: Formula) -> Formula:
    parts: list[Formula] = []
    for f in fs:
        if isinstance(f, Top):
            return TRUE
        if isinstance(f, Bottom) or f in parts:
            continue
        if neg(f) in parts:
            return TRUE
        parts.append(f)
    if not parts:
        return FALSE
    return reduce(Or, parts)


# --- printing ----------------------------------------------------------------

_BARE_ATOM = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_RESERVED = {"G", "F", "X", "U", "true", "false"}

# binding strength; higher binds tighter
_PREC = {Implies: 1, Or: 2, And: 3, Until: 4}


def _atom_text(name: str) -> str:
    if _BARE_ATOM.match(name) and name not in _RESERVED:
        return name
    return '"' + name + '"'


def to_text(f: Formula) -> str:
    """Render ``f`` so that ``parse_ltl(to_text(f)) == f``."""
    if isinstance(f, Atom):
        return _atom_text(f.name)
    if isinstance(f, Top):
        return "true"
    if isinstance(f, Bottom):
        return "false"
    if isinstance(f, _UNARY):
        op = {Not: "!", Next: "X ", Eventually: "F ", Always: "G "}[type(f)]
        inner = to_text(f.operand)
        if isinstance(f.operand, _BINARY):
            inner = f"({inner})"
        return op + inner
    prec = _PREC[type(f)]
    sym = {Implies: "->", Or: "|", And: "&", Until: "U"}[type(f)]
    left, right = to_text(f.left), to_text(f.right)
    right_assoc = isinstance(f, (Implies, Until))
    if isinstance(f.left, _BINARY):
        lp = _PREC[type(f.left)]
        if lp < prec or (lp == prec and right_assoc):
            left = f"({left})"
    if isinstance(f.right, _BINARY):
        rp = _PREC[type(f.right)]
        if rp < prec or (rp == prec and not right_assoc):
            right = f"({right})"
    return f"{left} {sym} {right}"


# --- parsing -------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<quoted>"[^"]*")
  | (?P<arrow>->|→)
  | (?P<op>[!&|()¬∧∨])
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)

_ALIASES = {"¬": "!", "∧": "&", "∨": "|", "→": "->"}


def _tokenize(text: str) -> Iterator[tuple[str, str, int]]:
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise LtlSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        value = m.group()
        if kind == "quoted":
            yield "atom", value[1:-1], pos
        elif kind == "word":
            if value in ("G", "F", "X", "U"):
                yield "op", value, pos
            elif value in ("true", "false"):
                yield "const", value, pos
            else:
                yield "atom", value, pos
        elif kind in ("op", "arrow"):
            yield "op", _ALIASES.get(value, value), pos
        pos = m.end()
    yield "end", "", len(text)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = list(_tokenize(text))
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str) -> None:
        kind, v, pos = self.take()
        if v != value or kind != "op":
            raise LtlSyntaxError(f"expected {value!r}, found {v or 'end of input'!r}", self.text, pos)

    def parse(self) -> Formula:
        f = self.implication()
        kind, v, pos = self.peek()
        if kind != "end":
            raise LtlSyntaxError(f"unexpected {v!r}", self.text, pos)
        return f

    def implication(self) -> Formula:
        left = self.disjunction()
        if self.peek()[:2] == ("op", "->"):
            self.take()
            return Implies(left, self.implication())
        return left

    def disjunction(self) -> Formula:
        f = self.conjunction()
        while self.peek()[:2] == ("op", "|"):
            self.take()
            f = Or(f, self.conjunction())
        return f

    def conjunction(self) -> Formula:
        f = self.until()
        while self.peek()[:2] == ("op", "&"):
            self.take()
            f = And(f, self.until())
        return f

    def until(self) -> Formula:
        left = self.unary()
        if self.peek()[:2] == ("op", "U"):
            self.take()
            return Until(left, self.until())
        return left

    def unary(self) -> Formula:
        kind, v, pos = self.take()
        if kind == "op" and v in ("!", "G", "F", "X"):
            operand = self.unary()
            return {"!": Not, "G": Always, "F": Eventually, "X": Next}[v](operand)
        if kind == "op" and v == "(":
            f = self.implication()
            self.expect(")")
            return f
        if kind == "atom":
            if not v.strip():
                raise LtlSyntaxError("empty atom name", self.text, pos)
            return Atom(v)
        if kind == "const":
            return TRUE if v == "true" else FALSE
        raise LtlSyntaxError(f"expected a formula, found {v or 'end of input'!r}", self.text, pos)


def parse_ltl(text: str) -> Formula:
    """Parse the surface syntax described in the module docstring."""
    return _Parser(text).parse()
