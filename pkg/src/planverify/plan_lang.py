"""Parser for plan scripts.

Plans are written in a small indentation-delimited language modeled on the
Python programs a planner emits::

    def cross():
        while not pedestrian_observed():
            velocity_publisher(10, 0)
        stop()

    cross()

Supported statements: ``def``, API/function calls, ``if``/``elif``/``else``,
``while`` over sensor conditions, ``for _ in range(N)`` with a literal ``N``,
assignments (recorded, no semantics) and ``return``.  Conditions are boolean
combinations (``not``/``and``/``or``) of sensor calls and ``True``/``False``.
Anything else is rejected with a positioned error.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

ENTRY = "__main__"
BUILTIN_SLEEP = "sleep"
INDENT = "    "

SCHEMA_API = "planverify.api/1"


class PlanError(SyntaxError):
    """Base of all plan front-end errors; always carries a source position."""

    def __init__(self, message: str, line: int = 0, column: int = 0, expected: str | None = None):
        where = f"line {line}, column {column}" if line else "plan"
        super().__init__(f"{where}: {message}")
        self.message = message
        self.line = line
        self.column = column
        self.expected = expected
        self.lineno = line
        self.offset = column

    def __str__(self) -> str:
        return str(self.args[0])


class PlanSyntaxError(PlanError):
    pass


class UnknownConstruct(PlanSyntaxError):
    """A well-formed statement that lies outside the supported grammar."""


class CallCycleError(PlanError, RecursionError):
    pass


# --- AST ------------------------------------------------------------------------


@dataclass(frozen=True)
class CondCall:
    target: str
    args: tuple[str, ...] = ()


@dataclass(frozen=True)
class CondConst:
    value: bool


@dataclass(frozen=True)
class CondNot:
    operand: "CondExpr"


@dataclass(frozen=True)
class CondAnd:
    left: "CondExpr"
    right: "CondExpr"


@dataclass(frozen=True)
class CondOr:
    left: "CondExpr"
    right: "CondExpr"


CondExpr = CondCall | CondConst | CondNot | CondAnd | CondOr


@dataclass(frozen=True)
class CallStmt:
    target: str
    args: tuple[str, ...] = ()
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class If:
    cond: CondExpr
    then: tuple["Stmt", ...]
    else_: tuple["Stmt", ...] = ()
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class While:
    cond: CondExpr
    body: tuple["Stmt", ...]
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class For:
    count: int
    body: tuple["Stmt", ...]
    var: str = "_"
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Assign:
    name: str
    expr: str
    op: str = "="
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Return:
    value: str | None = None
    line: int = field(default=0, compare=False)


Stmt = CallStmt | If | While | For | Assign | Return


@dataclass(frozen=True)
class FunctionDef:
    name: str
    params: tuple[str, ...]
    body: tuple[Stmt, ...]
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class PlanAst:
    functions: tuple[FunctionDef, ...]
    entry: str | None

    def function(self, name: str) -> FunctionDef | None:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    @property
    def entry_function(self) -> FunctionDef | None:
        return self.function(self.entry) if self.entry else None


# --- API table -------------------------------------------------------------------


@dataclass(frozen=True)
class ApiSpec:
    name: str
    arity: int | None
    kind: str  # "boolean" | "action"

    def __post_init__(self):
        if self.kind not in ("boolean", "action"):
            raise ValueError(f"API {self.name}: kind must be 'boolean' or 'action', got {self.kind!r}")


@dataclass(frozen=True)
class ApiTable:
    apis: Mapping[str, ApiSpec]

    @classmethod
    def from_specs(cls, specs: Iterable[ApiSpec]) -> "ApiTable":
        return cls({s.name: s for s in specs})

    @classmethod
    def from_doc(cls, doc: Mapping) -> "ApiTable":
        if doc.get("schema") != SCHEMA_API:
            raise ValueError(f"unsupported API table schema {doc.get('schema')!r}")
        return cls.from_specs(ApiSpec(a["name"], a.get("arity"), a["kind"]) for a in doc["apis"])

    @classmethod
    def load(cls, path) -> "ApiTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_doc(json.load(fh))

    def to_doc(self) -> dict:
        return {
            "schema": SCHEMA_API,
            "apis": [{"name": s.name, "arity": s.arity, "kind": s.kind} for s in sorted(self.apis.values(), key=lambda s: s.name)],
        }

    def get(self, name: str) -> ApiSpec | None:
        return self.apis.get(name)

    def is_sensor(self, name: str) -> bool:
        spec = self.apis.get(name)
        return spec is not None and spec.kind == "boolean"


# --- lexer -------------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<string>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\*\*|//|==|!=|<=|>=|\+=|-=|\*=|/=|->|[()\[\]{},:.=<>+\-*/%@~])
    """,
    re.VERBOSE,
)

KEYWORDS = {
    "def", "if", "elif", "else", "while", "for", "in", "return", "not", "and", "or", "True", "False",
}
UNSUPPORTED = {
    "class", "import", "from", "try", "except", "finally", "with", "lambda", "yield", "async",
    "await", "global", "nonlocal", "del", "raise", "assert", "break", "continue", "pass", "is",
    "None", "print_function",
}


@dataclass(frozen=True)
class Token:
    kind: str  # name | number | string | op | end
    value: str
    line: int
    col: int  # 1-based
    end: int  # 0-based end offset in the line text


@dataclass
class _Line:
    number: int
    indent: int
    text: str
    tokens: list[Token]


def _tokenize_line(text: str, number: int, start: int) -> list[Token]:
    toks: list[Token] = []
    pos = start
    while pos < len(text):
        ch = text[pos]
        if ch == "#":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            raise PlanSyntaxError(f"unexpected character {ch!r}", number, pos + 1)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(Token(kind, m.group(), number, pos + 1, m.end()))
        pos = m.end()
    toks.append(Token("end", "", number, len(text.rstrip()) + 1, len(text)))
    return toks


def _logical_lines(source: str) -> list[_Line]:
    out = []
    for i, raw in enumerate(source.splitlines(), start=1):
        stripped = raw.lstrip(" \t")
        if not stripped or stripped.startswith("#"):
            continue
        lead = raw[: len(raw) - len(stripped)]
        if "\t" in lead:
            raise PlanSyntaxError("tab characters are not allowed in indentation", i, lead.index("\t") + 1, "spaces")
        toks = _tokenize_line(raw, i, len(lead))
        if toks[0].kind == "end":
            continue
        out.append(_Line(i, len(lead), raw, toks))
    return out


# --- parser ------------------------------------------------------------------------


class _Cursor:
    """Token cursor over one logical line."""

    def __init__(self, line: _Line, pos: int = 0):
        self.line = line
        self.toks = line.tokens
        self.i = pos

    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def take(self) -> Token:
        tok = self.peek()
        if tok.kind != "end":
            self.i += 1
        return tok

    def at(self, value: str, kind: str | None = None) -> bool:
        tok = self.peek()
        return tok.value == value and (kind is None or tok.kind == kind) and tok.kind != "end"

    def expect(self, value: str, what: str | None = None) -> Token:
        tok = self.take()
        if tok.value != value or tok.kind in ("end", "string"):
            found = tok.value or "end of line"
            raise PlanSyntaxError(f"expected {what or repr(value)}, found {found!r}", tok.line, tok.col, value)
        return tok

    def expect_name(self, what: str) -> Token:
        tok = self.take()
        if tok.kind != "name" or tok.value in KEYWORDS:
            found = tok.value or "end of line"
            raise PlanSyntaxError(f"expected {what}, found {found!r}", tok.line, tok.col, what)
        return tok

    def expect_end(self) -> None:
        tok = self.peek()
        if tok.kind != "end":
            raise PlanSyntaxError(f"unexpected {tok.value!r}", tok.line, tok.col, "end of line")

    def rest_text(self) -> str:
        tok = self.peek()
        return self.line.text[tok.col - 1 :].split("#")[0].strip() if tok.kind != "end" else ""


def _split_args(cur: _Cursor) -> tuple[str, ...]:
    """Consume ``( ... )`` and return the raw text of each top-level argument."""
    open_tok = cur.expect("(")
    text = cur.line.text
    args: list[str] = []
    depth = 0
    start = open_tok.end
    while True:
        tok = cur.take()
        if tok.kind == "end":
            raise PlanSyntaxError("unclosed '('", open_tok.line, open_tok.col, ")")
        if tok.kind == "op" and tok.value in "([{":
            depth += 1
        elif tok.kind == "op" and tok.value in ")]}":
            if depth == 0:
                if tok.value != ")":
                    raise PlanSyntaxError(f"mismatched {tok.value!r}", tok.line, tok.col, ")")
                piece = text[start : tok.col - 1].strip()
                if piece:
                    args.append(piece)
                elif args:
                    raise PlanSyntaxError("empty argument", tok.line, tok.col, "expression")
                return tuple(args)
            depth -= 1
        elif tok.kind == "op" and tok.value == "," and depth == 0:
            piece = text[start : tok.col - 1].strip()
            if not piece:
                raise PlanSyntaxError("empty argument", tok.line, tok.col, "expression")
            args.append(piece)
            start = tok.end
        elif tok.kind == "name" and tok.value in UNSUPPORTED | {"def", "if", "while", "for", "return"}:
            raise UnknownConstruct(f"{tok.value!r} inside call arguments", tok.line, tok.col)


def _parse_cond(cur: _Cursor) -> CondExpr:
    left = _parse_and(cur)
    while cur.at("or", "name"):
        cur.take()
        left = CondOr(left, _parse_and(cur))
    return left


def _parse_and(cur: _Cursor) -> CondExpr:
    left = _parse_not(cur)
    while cur.at("and", "name"):
        cur.take()
        left = CondAnd(left, _parse_not(cur))
    return left


def _parse_not(cur: _Cursor) -> CondExpr:
    if cur.at("not", "name"):
        cur.take()
        return CondNot(_parse_not(cur))
    return _parse_cond_atom(cur)


def _parse_cond_atom(cur: _Cursor) -> CondExpr:
    tok = cur.peek()
    if tok.kind == "op" and tok.value == "(":
        cur.take()
        inner = _parse_cond(cur)
        cur.expect(")")
        return inner
    if tok.kind == "name" and tok.value in ("True", "False"):
        cur.take()
        return CondConst(tok.value == "True")
    if tok.kind == "name" and tok.value not in KEYWORDS | UNSUPPORTED and cur.peek(1).value == "(":
        cur.take()
        args = _split_args(cur)
        _reject_trailing_operator(cur)
        return CondCall(tok.value, args)
    if tok.kind == "end":
        raise PlanSyntaxError("expected a condition", tok.line, tok.col, "condition")
    raise UnknownConstruct(
        f"condition term {tok.value!r} is not a sensor call or boolean literal", tok.line, tok.col
    )


def _reject_trailing_operator(cur: _Cursor) -> None:
    tok = cur.peek()
    if tok.kind == "op" and tok.value not in (")", ":"):
        raise UnknownConstruct(f"operator {tok.value!r} in condition", tok.line, tok.col)


_NUMBER = re.compile(r"[+-]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?\Z")


class _Parser:
    def __init__(self, source: str):
        self.lines = _logical_lines(source)
        self.i = 0

    def peek_line(self) -> _Line | None:
        return self.lines[self.i] if self.i < len(self.lines) else None

    def parse(self) -> PlanAst:
        functions: list[FunctionDef] = []
        main: list[Stmt] = []
        first = self.peek_line()
        if first is not None and first.indent != 0:
            raise PlanSyntaxError("unexpected indent", first.number, 1, "statement at column 1")
        while self.peek_line() is not None:
            line = self.peek_line()
            head = line.tokens[0]
            if head.value == "def" and head.kind == "name":
                fn = self.parse_def(line)
                if any(f.name == fn.name for f in functions):
                    raise PlanSyntaxError(f"function {fn.name!r} defined twice", line.number, head.col)
                functions.append(fn)
            else:
                main.extend(self.parse_statement(line, 0))
        if main or not functions:
            functions.append(FunctionDef(ENTRY, (), tuple(main), 1))
            entry = ENTRY
        else:
            entry = functions[0].name
        ast = PlanAst(tuple(functions), entry)
        _check_call_cycles(ast)
        return ast

    def parse_def(self, line: _Line) -> FunctionDef:
        self.i += 1
        cur = _Cursor(line, 1)
        name = cur.expect_name("function name")
        cur.expect("(")
        params: list[str] = []
        if not cur.at(")"):
            while True:
                p = cur.expect_name("parameter name")
                if p.value in params:
                    raise PlanSyntaxError(f"duplicate parameter {p.value!r}", p.line, p.col)
                params.append(p.value)
                if cur.at(","):
                    cur.take()
                    continue
                break
        cur.expect(")")
        cur.expect(":")
        cur.expect_end()
        body = self.parse_block(line)
        return FunctionDef(name.value, tuple(params), tuple(body), line.number)

    def parse_block(self, header: _Line) -> list[Stmt]:
        nxt = self.peek_line()
        if nxt is None or nxt.indent <= header.indent:
            at = nxt.number if nxt else header.number + 1
            raise PlanSyntaxError("expected an indented block", at, 1, "indented block")
        width = nxt.indent
        stmts: list[Stmt] = []
        while True:
            line = self.peek_line()
            if line is None or line.indent < width:
                break
            if line.indent > width:
                raise PlanSyntaxError("unexpected indent", line.number, line.indent + 1)
            stmts.extend(self.parse_statement(line, width))
        if line is not None and line.indent > header.indent:
            # dedent to a column that opened no block
            raise PlanSyntaxError("dedent does not match any outer indentation level", line.number, line.indent + 1)
        return stmts

    def parse_suite(self, header: _Line, cur: _Cursor) -> list[Stmt]:
        """Body after ``:`` -- either inline on the same line or an indented block."""
        if cur.peek().kind == "end":
            return self.parse_block(header)
        return [self.simple_statement(header, cur)]

    def parse_statement(self, line: _Line, indent: int) -> list[Stmt]:
        head = line.tokens[0]
        if head.kind == "name" and head.value in ("if", "while", "for"):
            self.i += 1
            cur = _Cursor(line, 1)
            if head.value == "if":
                return [self.parse_if(line, cur)]
            if head.value == "while":
                cond = _parse_cond(cur)
                cur.expect(":")
                return [While(cond, tuple(self.parse_suite(line, cur)), line.number)]
            return [self.parse_for(line, cur)]
        if head.kind == "name" and head.value in ("elif", "else"):
            raise PlanSyntaxError(f"{head.value!r} without matching 'if'", line.number, head.col)
        if head.kind == "name" and head.value == "def":
            raise UnknownConstruct("nested function definitions are not supported", line.number, head.col)
        self.i += 1
        return [self.simple_statement(line, _Cursor(line, 0))]

    def parse_if(self, line: _Line, cur: _Cursor) -> If:
        cond = _parse_cond(cur)
        cur.expect(":")
        then = self.parse_suite(line, cur)
        nxt = self.peek_line()
        else_: list[Stmt] = []
        if nxt is not None and nxt.indent == line.indent and nxt.tokens[0].kind == "name":
            kw = nxt.tokens[0].value
            if kw == "elif":
                self.i += 1
                else_ = [self.parse_if(nxt, _Cursor(nxt, 1))]
            elif kw == "else":
                self.i += 1
                c2 = _Cursor(nxt, 1)
                c2.expect(":")
                else_ = self.parse_suite(nxt, c2)
        return If(cond, tuple(then), tuple(else_), line.number)

    def parse_for(self, line: _Line, cur: _Cursor) -> For:
        var = cur.expect_name("loop variable")
        cur.expect("in")
        rng = cur.take()
        if rng.value != "range" or rng.kind != "name":
            raise UnknownConstruct("only 'for _ in range(N)' loops are supported", rng.line, rng.col)
        args = _split_args(cur)
        bounds = []
        for a in args:
            if not re.fullmatch(r"[+-]?\d+", a):
                raise UnknownConstruct(f"loop bound {a!r} is not an integer literal", line.number, rng.col)
            bounds.append(int(a))
        if len(bounds) == 1:
            count = bounds[0]
        elif len(bounds) == 2:
            count = bounds[1] - bounds[0]
        else:
            raise UnknownConstruct("range() takes one or two integer literals here", line.number, rng.col)
        count = max(count, 0)
        cur.expect(":")
        body = self.parse_suite(line, cur)
        return For(count, tuple(body), var.value, line.number)

    def simple_statement(self, line: _Line, cur: _Cursor) -> Stmt:
        tok = cur.peek()
        if tok.kind == "name" and tok.value in UNSUPPORTED:
            raise UnknownConstruct(f"{tok.value!r} statements are not supported", tok.line, tok.col)
        if tok.kind == "name" and tok.value in ("if", "while", "for", "def", "elif", "else"):
            raise UnknownConstruct(f"compound statement {tok.value!r} after ':' must start a new line", tok.line, tok.col)
        if tok.kind == "name" and tok.value == "return":
            cur.take()
            value = cur.rest_text() or None
            return Return(value, line.number)
        if tok.kind != "name" or tok.value in KEYWORDS:
            raise PlanSyntaxError(f"expected a statement, found {tok.value!r}", tok.line, tok.col, "statement")
        cur.take()
        nxt = cur.peek()
        if nxt.kind == "op" and nxt.value in ("=", "+=", "-=", "*=", "/="):
            cur.take()
            expr = cur.rest_text()
            if not expr:
                raise PlanSyntaxError("missing expression after assignment", nxt.line, nxt.col + len(nxt.value), "expression")
            return Assign(tok.value, expr, nxt.value, line.number)
        if nxt.kind == "op" and nxt.value == "(":
            args = _split_args(cur)
            cur.expect_end()
            return CallStmt(tok.value, args, line.number)
        if nxt.kind == "op" and nxt.value in (".", "["):
            raise UnknownConstruct("attribute and subscript access are not supported", nxt.line, nxt.col)
        raise PlanSyntaxError(
            f"expected '(' or '=' after {tok.value!r}, found {nxt.value or 'end of line'!r}",
            nxt.line, nxt.col, "( or =",
        )


def _calls_in(stmts: Sequence[Stmt]) -> Iterator[CallStmt]:
    for s in stmts:
        if isinstance(s, CallStmt):
            yield s
        elif isinstance(s, If):
            yield from _calls_in(s.then)
            yield from _calls_in(s.else_)
        elif isinstance(s, (While, For)):
            yield from _calls_in(s.body)


def cond_calls(c: CondExpr) -> Iterator[CondCall]:
    if isinstance(c, CondCall):
        yield c
    elif isinstance(c, CondNot):
        yield from cond_calls(c.operand)
    elif isinstance(c, (CondAnd, CondOr)):
        yield from cond_calls(c.left)
        yield from cond_calls(c.right)


def _conditions_in(stmts: Sequence[Stmt]) -> Iterator[tuple[CondExpr, int]]:
    for s in stmts:
        if isinstance(s, If):
            yield s.cond, s.line
            yield from _conditions_in(s.then)
            yield from _conditions_in(s.else_)
        elif isinstance(s, While):
            yield s.cond, s.line
            yield from _conditions_in(s.body)
        elif isinstance(s, For):
            yield from _conditions_in(s.body)


def call_graph(ast: PlanAst) -> dict[str, list[str]]:
    names = {f.name for f in ast.functions}
    graph = {}
    for f in ast.functions:
        callees = [c.target for c in _calls_in(f.body) if c.target in names]
        callees += [c.target for cond, _ in _conditions_in(f.body) for c in cond_calls(cond) if c.target in names]
        graph[f.name] = sorted(set(callees))
    return graph


def find_cycle(ast: PlanAst) -> list[str] | None:
    """A call-graph cycle as a list of function names, or None."""
    graph = call_graph(ast)
    color: dict[str, int] = {}
    stack: list[str] = []

    def visit(n: str) -> list[str] | None:
        color[n] = 1
        stack.append(n)
        for m in graph.get(n, ()):
            if color.get(m) == 1:
                return stack[stack.index(m):] + [m]
            if m not in color:
                cyc = visit(m)
                if cyc:
                    return cyc
        stack.pop()
        color[n] = 2
        return None

    for f in ast.functions:
        if f.name not in color:
            cyc = visit(f.name)
            if cyc:
                return cyc
    return None


def _check_call_cycles(ast: PlanAst) -> None:
    cyc = find_cycle(ast)
    if cyc:
        fn = ast.function(cyc[0])
        raise CallCycleError(f"recursive call chain {' -> '.join(cyc)}", fn.line if fn else 0, 1)


def parse_plan(source: str) -> PlanAst:
    """Parse plan text into a :class:`PlanAst`.

    Raises :class:`PlanSyntaxError` (or its subclass :class:`UnknownConstruct`)
    with a line/column position, or :class:`CallCycleError` for recursion.
    """
    return _Parser(source).parse()


# --- pretty printing --------------------------------------------------------------


def cond_to_text(c: CondExpr, parent: int = 0) -> str:
    # precedence: or=1, and=2, not=3
    if isinstance(c, CondConst):
        return "True" if c.value else "False"
    if isinstance(c, CondCall):
        return f"{c.target}({', '.join(c.args)})"
    if isinstance(c, CondNot):
        return "not " + cond_to_text(c.operand, 3)
    if isinstance(c, CondAnd):
        text = f"{cond_to_text(c.left, 2)} and {cond_to_text(c.right, 3)}"
        return f"({text})" if parent > 2 else text
    text = f"{cond_to_text(c.left, 1)} or {cond_to_text(c.right, 2)}"
    return f"({text})" if parent > 1 else text


def _print_block(stmts: Sequence[Stmt], depth: int, out: list[str]) -> None:
    pad = INDENT * depth
    for s in stmts:
        if isinstance(s, CallStmt):
            out.append(f"{pad}{s.target}({', '.join(s.args)})")
        elif isinstance(s, Assign):
            out.append(f"{pad}{s.name} {s.op} {s.expr}")
        elif isinstance(s, Return):
            out.append(f"{pad}return" + (f" {s.value}" if s.value else ""))
        elif isinstance(s, If):
            out.append(f"{pad}if {cond_to_text(s.cond)}:")
            _print_block(s.then, depth + 1, out)
            if s.else_:
                out.append(f"{pad}else:")
                _print_block(s.else_, depth + 1, out)
        elif isinstance(s, While):
            out.append(f"{pad}while {cond_to_text(s.cond)}:")
            _print_block(s.body, depth + 1, out)
        elif isinstance(s, For):
            out.append(f"{pad}for {s.var} in range({s.count}):")
            _print_block(s.body, depth + 1, out)
        else:  # pragma: no cover
            raise TypeError(f"unknown statement {s!r}")


def pretty_print(ast: PlanAst) -> str:
    out: list[str] = []
    main = None
    for f in ast.functions:
        if f.name == ENTRY:
            main = f
            continue
        out.append(f"def {f.name}({', '.join(f.params)}):")
        _print_block(f.body, 1, out)
        out.append("")
    if main is not None:
        _print_block(main.body, 0, out)
    while out and out[-1] == "":
        out.pop()
    return "\n".join(out) + ("\n" if out else "")


def ast_to_doc(ast: PlanAst) -> dict:
    """JSON-friendly dump of the tree (positions omitted)."""

    def cond(c):
        if isinstance(c, CondCall):
            return {"call": c.target, "args": list(c.args)}
        if isinstance(c, CondConst):
            return {"const": c.value}
        if isinstance(c, CondNot):
            return {"not": cond(c.operand)}
        key = "and" if isinstance(c, CondAnd) else "or"
        return {key: [cond(c.left), cond(c.right)]}

    def stmt(s):
        if isinstance(s, CallStmt):
            return {"call": s.target, "args": list(s.args)}
        if isinstance(s, If):
            return {"if": cond(s.cond), "then": [stmt(x) for x in s.then], "else": [stmt(x) for x in s.else_]}
        if isinstance(s, While):
            return {"while": cond(s.cond), "body": [stmt(x) for x in s.body]}
        if isinstance(s, For):
            return {"for": s.count, "var": s.var, "body": [stmt(x) for x in s.body]}
        if isinstance(s, Assign):
            return {"assign": s.name, "op": s.op, "expr": s.expr}
        return {"return": s.value}

    return {
        "schema": "planverify.ast/1",
        "entry": ast.entry,
        "functions": [
            {"name": f.name, "params": list(f.params), "body": [stmt(s) for s in f.body]} for f in ast.functions
        ],
    }


# --- validation ---------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    subject: str
    message: str = ""
    line: int = 0


def validate_plan(ast: PlanAst, api_table: ApiTable) -> list[Diagnostic]:
    """Check calls, arities, conditions and recursion against ``api_table``."""
    diags: list[Diagnostic] = []
    funcs = {f.name: f for f in ast.functions}
    names = [f.name for f in ast.functions]
    for n in sorted({n for n in names if names.count(n) > 1}):
        diags.append(Diagnostic("DuplicateFunction", n, f"function {n!r} defined more than once"))
    for f in ast.functions:
        if len(set(f.params)) != len(f.params):
            diags.append(Diagnostic("DuplicateParameter", f.name, "parameter names must be unique", f.line))
    if ast.entry is not None:
        entry = funcs.get(ast.entry)
        if entry is None:
            diags.append(Diagnostic("UnknownEntry", ast.entry, "entry function is not defined"))
        elif entry.params:
            diags.append(Diagnostic("EntryParameters", ast.entry, "entry function must take no parameters", entry.line))

    for f in ast.functions:
        for call in _calls_in(f.body):
            t = call.target
            if t in funcs:
                want = len(funcs[t].params)
                if len(call.args) != want:
                    diags.append(Diagnostic("ArityMismatch", t, f"{t} takes {want} arguments, got {len(call.args)}", call.line))
            elif t == BUILTIN_SLEEP and api_table.get(t) is None:
                if len(call.args) != 1:
                    diags.append(Diagnostic("ArityMismatch", t, "sleep takes 1 argument", call.line))
            elif (spec := api_table.get(t)) is not None:
                if spec.arity is not None and len(call.args) != spec.arity:
                    diags.append(Diagnostic("ArityMismatch", t, f"{t} takes {spec.arity} arguments, got {len(call.args)}", call.line))
            else:
                diags.append(Diagnostic("UnknownApi", t, f"{t} is not a declared API or defined function", call.line))
        for cond, line in _conditions_in(f.body):
            for leaf in cond_calls(cond):
                spec = api_table.get(leaf.target)
                if spec is None:
                    kind = "NonBooleanCondition" if leaf.target in funcs else "UnknownApi"
                    diags.append(Diagnostic(kind, leaf.target, f"{leaf.target} is not a declared boolean API", line))
                elif spec.kind != "boolean":
                    diags.append(Diagnostic("NonBooleanCondition", leaf.target, f"{leaf.target} is an action API", line))
                elif spec.arity is not None and len(leaf.args) != spec.arity:
                    diags.append(Diagnostic("ArityMismatch", leaf.target, f"{leaf.target} takes {spec.arity} arguments", line))

    cyc = find_cycle(ast)
    if cyc:
        diags.append(Diagnostic("Recursion", cyc[0], " -> ".join(cyc)))
    return diags


def classify_number(arg: str) -> float | None:
    """Numeric value of a literal argument (keyword prefix allowed), else None."""
    text = arg.split("=", 1)[1] if re.match(r"\s*[A-Za-z_]\w*\s*=[^=]", arg) else arg
    return _signed_value(text.replace(" ", ""))


def _signed_value(text: str) -> float | None:
    # accepts literals wrapped in parentheses and unary signs, e.g. -(5) or -(-2.0)
    if _NUMBER.match(text):
        return float(text)
    if text[:1] in "+-" and len(text) > 1:
        inner = _signed_value(text[1:])
        return None if inner is None else (-inner if text[0] == "-" else inner)
    if text.startswith("(") and text.endswith(")"):
        return _signed_value(text[1:-1])
    return None
