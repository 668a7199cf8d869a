"""Text format for models (``.scm.txt``) and queries.

Linear model::

    linear model coffee
    var p q r
    eq p = 0.5*q + eps
    eq q = -1.8*p + eps
    eq r = 1*p + eps
    eps p ~ N(0, 1)
    eps q ~ N(19, 3)
    eps r ~ N(3, 2)
    cov eps(p) eps(q) 0.25      # optional off-diagonal disturbance covariance

Boolean model::

    boolean model firing_squad
    var c b t ab_b1 ab_b2
    root c
    abnormal ab_b1 ab_b2        # abnormal variables are roots
    eq b = (c | ab_b1) & !ab_b2
    eq t = b | c
    weight ab_b1 2              # optional relative likelihood

Query::

    observe r=4; do p=7; ask q, r

Comments start with ``#``. Identifiers must be declared with ``var`` before
use. Every error is a :class:`DslError` carrying a 1-based line and column.
"""

from __future__ import annotations

import graphlib
import math
import re
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np

from .model import (
    And,
    BoolExpr,
    BooleanScm,
    Const,
    LinearScm,
    ModelError,
    Not,
    Or,
    Query,
    Var,
)

MAX_NESTING = 100
RESERVED = frozenset({"eps"})


class DslError(ValueError):
    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


@dataclass(frozen=True)
class ModelDocument:
    kind: str
    name: str
    body: Union[LinearScm, BooleanScm]


# --- lexing ---------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<num>(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)
  | (?P<id>[A-Za-z][A-Za-z0-9_]*)
  | (?P<op>[-+*=(),&|!~;])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def _decode(text: Union[str, bytes]) -> str:
    if isinstance(text, str):
        return text
    try:
        return text.decode("utf-8")
    except UnicodeDecodeError as exc:
        before = text[: exc.start]
        line = before.count(b"\n") + 1
        column = exc.start - (before.rfind(b"\n") + 1) + 1
        raise DslError("input is not valid UTF-8", line, column) from None


def _lex_line(source: str, lineno: int) -> list[Token]:
    source = source.split("#", 1)[0]
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise DslError(f"unexpected character {source[pos]!r}", lineno, pos + 1)
        if m.lastgroup != "ws":
            tokens.append(Token(m.lastgroup, m.group(), lineno, pos + 1))
        pos = m.end()
    return tokens


def _lines(text: Union[str, bytes]) -> Iterator[tuple[int, int, list[Token]]]:
    """Yield ``(line number, end column, tokens)`` for every non-empty line."""
    for lineno, raw in enumerate(_decode(text).split("\n"), start=1):
        raw = raw[:-1] if raw.endswith("\r") else raw
        tokens = _lex_line(raw, lineno)
        if tokens:
            yield lineno, len(raw.split("#", 1)[0]) + 1, tokens


class _Cursor:
    def __init__(self, tokens: list[Token], lineno: int, end_column: int) -> None:
        self.tokens = tokens
        self.pos = 0
        self.lineno = lineno
        self.end_column = end_column

    def peek(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def error(self, message: str, token: Token | None = None) -> DslError:
        token = token or self.peek()
        if token is None:
            return DslError(message, self.lineno, self.end_column)
        return DslError(message, token.line, token.column)

    def next(self, what: str) -> Token:
        token = self.peek()
        if token is None:
            raise self.error(f"expected {what}, found end of line")
        self.pos += 1
        return token

    def accept_op(self, op: str) -> Token | None:
        token = self.peek()
        if token is not None and token.kind == "op" and token.text == op:
            self.pos += 1
            return token
        return None

    def expect_op(self, op: str) -> Token:
        token = self.accept_op(op)
        if token is None:
            found = self.peek()
            raise self.error(f"expected {op!r}" + (f", found {found.text!r}" if found else ", found end of line"))
        return token

    def expect_word(self, word: str) -> Token:
        token = self.next(repr(word))
        if token.kind != "id" or token.text != word:
            raise self.error(f"expected {word!r}, found {token.text!r}", token)
        return token

    def expect_id(self) -> Token:
        token = self.next("identifier")
        if token.kind != "id":
            raise self.error(f"expected identifier, found {token.text!r}", token)
        return token

    def expect_number(self) -> float:
        sign = -1.0 if self.accept_op("-") else 1.0
        if sign > 0:
            self.accept_op("+")
        token = self.next("number")
        if token.kind != "num":
            raise self.error(f"expected number, found {token.text!r}", token)
        value = sign * float(token.text)
        if not math.isfinite(value):
            raise self.error("number out of range", token)
        return value

    def expect_end(self) -> None:
        token = self.peek()
        if token is not None:
            raise self.error(f"unexpected {token.text!r}", token)


# --- models ---------------------------------------------------------------


class _Declarations:
    def __init__(self) -> None:
        self.order: list[str] = []
        self.where: dict[str, Token] = {}

    def declare(self, cur: _Cursor) -> None:
        while cur.peek() is not None:
            token = cur.expect_id()
            if token.text in RESERVED:
                raise cur.error(f"{token.text!r} is a reserved word", token)
            if token.text in self.where:
                raise cur.error(f"variable {token.text!r} declared twice", token)
            self.order.append(token.text)
            self.where[token.text] = token

    def lookup(self, cur: _Cursor) -> Token:
        token = cur.expect_id()
        if token.text not in self.where:
            raise cur.error(f"unknown identifier {token.text!r}", token)
        return token


def parse_model(text: Union[str, bytes]) -> ModelDocument:
    lines = list(_lines(text))
    if not lines:
        raise DslError("missing model header ('linear model <name>' or 'boolean model <name>')", 1, 1)
    lineno, end, tokens = lines[0]
    cur = _Cursor(tokens, lineno, end)
    kind = cur.next("model kind")
    if kind.kind != "id" or kind.text not in ("linear", "boolean"):
        raise cur.error("expected 'linear model <name>' or 'boolean model <name>'", kind)
    cur.expect_word("model")
    name = cur.expect_id().text
    cur.expect_end()
    body_lines = [_Cursor(t, ln, e) for ln, e, t in lines[1:]]
    if kind.text == "linear":
        body = _parse_linear(body_lines, kind)
    else:
        body = _parse_boolean(body_lines, kind)
    return ModelDocument(kind.text, name, body)


def _parse_terms(cur: _Cursor, decls: _Declarations, target: str) -> dict[str, float]:
    coefs: dict[str, float] = {}
    saw_eps = False
    first = True
    while True:
        sign = 1.0
        if cur.accept_op("-"):
            sign = -1.0
        elif not cur.accept_op("+") and not first:
            raise cur.error("expected '+' or '-'")
        first = False
        token = cur.peek()
        if token is not None and token.kind == "id" and token.text == "eps":
            cur.pos += 1
            if saw_eps or sign < 0:
                raise cur.error("disturbance term must appear once as '+ eps'", token)
            saw_eps = True
        else:
            coef = 1.0
            if token is not None and token.kind == "num":
                coef = cur.expect_number()
                cur.expect_op("*")
            ref = decls.lookup(cur)
            if ref.text in coefs:
                raise cur.error(f"{ref.text!r} appears twice in the equation for {target!r}", ref)
            coefs[ref.text] = sign * coef
        if cur.peek() is None:
            break
    if not saw_eps:
        raise cur.error("equation must end with '+ eps'")
    return coefs


def _parse_linear(lines: list[_Cursor], header: Token) -> LinearScm:
    decls = _Declarations()
    equations: dict[str, dict[str, float]] = {}
    dists: dict[str, tuple[float, float]] = {}
    covs: dict[tuple[str, str], float] = {}

    for cur in lines:
        keyword = cur.expect_id()
        if keyword.text == "var":
            decls.declare(cur)
        elif keyword.text == "eq":
            target = decls.lookup(cur)
            if target.text in equations:
                raise cur.error(f"duplicate equation for {target.text!r}", target)
            cur.expect_op("=")
            equations[target.text] = _parse_terms(cur, decls, target.text)
        elif keyword.text == "eps":
            target = decls.lookup(cur)
            if target.text in dists:
                raise cur.error(f"duplicate disturbance declaration for {target.text!r}", target)
            cur.expect_op("~")
            cur.expect_word("N")
            cur.expect_op("(")
            mean = cur.expect_number()
            cur.expect_op(",")
            var_token = cur.peek()
            var = cur.expect_number()
            if var < 0:
                raise cur.error("disturbance variance must be non-negative", var_token)
            cur.expect_op(")")
            cur.expect_end()
            dists[target.text] = (mean, var)
        elif keyword.text == "cov":
            pair = []
            for _ in range(2):
                cur.expect_word("eps")
                cur.expect_op("(")
                pair.append(decls.lookup(cur))
                cur.expect_op(")")
            value = cur.expect_number()
            cur.expect_end()
            a, b = pair[0].text, pair[1].text
            if a == b:
                raise cur.error("use 'eps' to set a disturbance variance", pair[1])
            key = tuple(sorted((a, b)))
            if key in covs:
                raise cur.error(f"duplicate covariance for ({a}, {b})", pair[0])
            covs[key] = value
        else:
            raise cur.error(f"unknown statement {keyword.text!r} in linear model", keyword)

    for name in decls.order:
        if name not in dists:
            token = decls.where[name]
            raise DslError(f"missing disturbance declaration for {name!r}", token.line, token.column)

    variables = decls.order
    index = {v: i for i, v in enumerate(variables)}
    n = len(variables)
    coeff = np.zeros((n, n))
    for target, row in equations.items():
        for ref, value in row.items():
            coeff[index[target], index[ref]] = value
    mean = np.array([dists[v][0] for v in variables])
    cov = np.diag([dists[v][1] for v in variables]) if n else np.zeros((0, 0))
    for (a, b), value in covs.items():
        cov[index[a], index[b]] = cov[index[b], index[a]] = value
    try:
        return LinearScm(tuple(variables), coeff, mean, cov)
    except ModelError as exc:
        raise DslError(str(exc), header.line, header.column) from None


def _parse_boolexpr(cur: _Cursor, decls: _Declarations, depth: int = 0) -> BoolExpr:
    if depth > MAX_NESTING:
        raise cur.error("expression nested too deeply")
    args = [_parse_and(cur, decls, depth)]
    while cur.accept_op("|"):
        args.append(_parse_and(cur, decls, depth))
    return args[0] if len(args) == 1 else Or(tuple(args))


def _parse_and(cur: _Cursor, decls: _Declarations, depth: int) -> BoolExpr:
    args = [_parse_unary(cur, decls, depth)]
    while cur.accept_op("&"):
        args.append(_parse_unary(cur, decls, depth))
    return args[0] if len(args) == 1 else And(tuple(args))


def _parse_unary(cur: _Cursor, decls: _Declarations, depth: int) -> BoolExpr:
    nots = 0
    while cur.accept_op("!"):
        nots += 1
    token = cur.next("expression")
    if token.kind == "op" and token.text == "(":
        expr = _parse_boolexpr(cur, decls, depth + 1)
        cur.expect_op(")")
    elif token.kind == "num" and token.text in ("0", "1"):
        expr = Const(int(token.text))
    elif token.kind == "id":
        if token.text not in decls.where:
            raise cur.error(f"unknown identifier {token.text!r}", token)
        expr = Var(token.text)
    else:
        raise cur.error(f"expected variable, 0, 1, '!' or '(', found {token.text!r}", token)
    for _ in range(nots):
        expr = Not(expr)
    return expr


def _parse_boolean(lines: list[_Cursor], header: Token) -> BooleanScm:
    decls = _Declarations()
    roots: dict[str, Token] = {}
    abnormals: dict[str, Token] = {}
    equations: dict[str, BoolExpr] = {}
    eq_where: dict[str, Token] = {}
    weights: dict[str, float] = {}

    for cur in lines:
        keyword = cur.expect_id()
        if keyword.text == "var":
            decls.declare(cur)
        elif keyword.text in ("root", "abnormal"):
            while cur.peek() is not None:
                token = decls.lookup(cur)
                if token.text in abnormals or (keyword.text == "root" and token.text in roots):
                    raise cur.error(f"{token.text!r} declared {keyword.text} twice", token)
                roots.setdefault(token.text, token)
                if keyword.text == "abnormal":
                    abnormals[token.text] = token
        elif keyword.text == "eq":
            target = decls.lookup(cur)
            if target.text in equations:
                raise cur.error(f"duplicate equation for {target.text!r}", target)
            cur.expect_op("=")
            equations[target.text] = _parse_boolexpr(cur, decls)
            eq_where[target.text] = target
            cur.expect_end()
        elif keyword.text == "weight":
            target = decls.lookup(cur)
            if target.text in weights:
                raise cur.error(f"duplicate weight for {target.text!r}", target)
            value_token = cur.peek()
            value = cur.expect_number()
            cur.expect_end()
            if value <= 0:
                raise cur.error("weight must be positive", value_token)
            weights[target.text] = value
        else:
            raise cur.error(f"unknown statement {keyword.text!r} in boolean model", keyword)

    for name, token in eq_where.items():
        if name in roots:
            raise DslError(f"root variable {name!r} cannot have an equation", token.line, token.column)
    for name in decls.order:
        if name not in roots and name not in equations:
            token = decls.where[name]
            raise DslError(f"missing equation for non-root variable {name!r}", token.line, token.column)
    for name in weights:
        if name not in abnormals:
            token = decls.where[name]
            raise DslError(f"weight declared for non-abnormal variable {name!r}", token.line, token.column)
    try:
        graphlib.TopologicalSorter({v: sorted(e.variables()) for v, e in equations.items()}).prepare()
    except graphlib.CycleError as exc:
        cycle = exc.args[1]
        token = eq_where[cycle[0]]
        raise DslError(f"cyclic equations: {' -> '.join(cycle)}", token.line, token.column) from None

    try:
        return BooleanScm(
            variables=tuple(decls.order),
            roots=tuple(roots),
            abnormals=tuple(abnormals),
            equations=equations,
            weights=weights,
        )
    except ModelError as exc:
        raise DslError(str(exc), header.line, header.column) from None


# --- serialization --------------------------------------------------------


def format_number(value: float) -> str:
    text = f"{value:.17g}"
    return "0" if text == "-0" else text


def serialize(doc: ModelDocument) -> str:
    lines = [f"{doc.kind} model {doc.name}"]
    body = doc.body
    if isinstance(body, LinearScm):
        if body.variables:
            lines.append("var " + " ".join(body.variables))
        for i, target in enumerate(body.variables):
            rhs = ""
            for j, ref in enumerate(body.variables):
                c = float(body.coeff[i, j])
                if c == 0.0:
                    continue
                mag = format_number(abs(c))
                if not rhs:
                    rhs = f"{'-' if c < 0 else ''}{mag}*{ref}"
                else:
                    rhs += f" {'-' if c < 0 else '+'} {mag}*{ref}"
            lines.append(f"eq {target} = {rhs + ' + eps' if rhs else 'eps'}")
        for i, target in enumerate(body.variables):
            mean = format_number(float(body.dist_mean[i]))
            var = format_number(float(body.dist_cov[i, i]))
            lines.append(f"eps {target} ~ N({mean}, {var})")
        for i, a in enumerate(body.variables):
            for j in range(i + 1, body.n):
                c = float(body.dist_cov[i, j])
                if c != 0.0:
                    lines.append(f"cov eps({a}) eps({body.variables[j]}) {format_number(c)}")
    else:
        if body.variables:
            lines.append("var " + " ".join(body.variables))
        plain_roots = [r for r in body.roots if r not in body.abnormals]
        if plain_roots:
            lines.append("root " + " ".join(plain_roots))
        if body.abnormals:
            lines.append("abnormal " + " ".join(body.abnormals))
        for target, expr in body.equations.items():
            lines.append(f"eq {target} = {expr.to_text()}")
        for target, weight in body.weights.items():
            lines.append(f"weight {target} {format_number(weight)}")
    return "\n".join(lines) + "\n"


# --- queries --------------------------------------------------------------


def _segments(text: Union[str, bytes]) -> Iterator[_Cursor]:
    for lineno, end, tokens in _lines(text):
        start = 0
        for i, token in enumerate(tokens + [None]):
            if token is None or (token.kind == "op" and token.text == ";"):
                if i > start:
                    seg_end = token.column if token is not None else end
                    yield _Cursor(tokens[start:i], lineno, seg_end)
                start = i + 1


def parse_query(text: Union[str, bytes]) -> Query:
    clauses: dict[str, Token] = {}
    observe: dict[str, float] = {}
    action: dict[str, float] = {}
    asks: list[str] = []
    ask_values: dict[str, float] = {}

    for cur in _segments(text):
        keyword = cur.expect_id()
        if keyword.text not in ("observe", "do", "ask"):
            raise cur.error(f"expected 'observe', 'do' or 'ask', found {keyword.text!r}", keyword)
        if keyword.text in clauses:
            raise cur.error(f"duplicate {keyword.text!r} clause", keyword)
        clauses[keyword.text] = keyword
        seen: set[str] = set()
        while True:
            name = cur.expect_id()
            if name.text in seen:
                raise cur.error(f"variable {name.text!r} appears twice in {keyword.text!r}", name)
            seen.add(name.text)
            if keyword.text == "ask":
                asks.append(name.text)
                if cur.accept_op("="):
                    ask_values[name.text] = cur.expect_number()
            else:
                cur.expect_op("=")
                target = observe if keyword.text == "observe" else action
                target[name.text] = cur.expect_number()
            if cur.peek() is None:
                break
            cur.expect_op(",")
    return Query(observe, action, tuple(asks), ask_values)
