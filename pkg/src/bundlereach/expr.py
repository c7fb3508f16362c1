"""Tokenizer and polynomial-expression parser shared by model files and STL formulas."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .polynomial import SparsePolynomial, multiply, power


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.message = message
        self.line = line
        self.col = col
        super().__init__(f"line {line}, column {col}: {message}" if line else message)


@dataclass(frozen=True)
class Token:
    kind: str  # NUM, NAME, STR, OP, EOF
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>(\#|//)[^\n]*)
  | (?P<NUM>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
  | (?P<NAME>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<STR>"[^"\n]*")
  | (?P<OP><=|>=|&&|\|\||[<>!~=;,{}\[\]()'+\-*/^])
""", re.VERBOSE)


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens


class TokenStream:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def peek(self) -> Token:
        return self.tokens[self.pos]

    def ahead(self, k: int = 1) -> Token:
        return self.tokens[min(self.pos + k, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def at(self, text: str) -> bool:
        tok = self.peek
        return tok.kind in ("OP", "NAME") and tok.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}, found {self.describe(self.peek)}")
        return self.next()

    def expect_kind(self, kind: str, what: str) -> Token:
        if self.peek.kind != kind:
            self.error(f"expected {what}, found {self.describe(self.peek)}")
        return self.next()

    @staticmethod
    def describe(tok: Token) -> str:
        return "end of input" if tok.kind == "EOF" else repr(tok.text)

    def error(self, message: str, tok: Token | None = None):
        tok = tok or self.peek
        raise ParseError(message, tok.line, tok.col)


def parse_number(ts: TokenStream) -> float:
    sign = 1.0
    if ts.accept("-"):
        sign = -1.0
    else:
        ts.accept("+")
    tok = ts.expect_kind("NUM", "a number")
    return sign * float(tok.text)


def parse_int(ts: TokenStream) -> int:
    tok = ts.expect_kind("NUM", "an integer")
    if not tok.text.isdigit():
        ts.error(f"expected an integer, found {tok.text!r}", tok)
    return int(tok.text)


class ExprParser:
    """Polynomial expressions over ``variables`` with affine dependence on ``params``.

    Grammar::

        expr   := ['+'|'-'] term (('+'|'-') term)*
        term   := unary (('*'|'/') unary)*
        unary  := '-' unary | power
        power  := atom ('^' INT)?
        atom   := NUM | NAME | '(' expr ')'
    """

    def __init__(self, variables: Sequence[str], params: Sequence[str] = ()):
        self.variables = {name: k for k, name in enumerate(variables)}
        self.params = {name: k for k, name in enumerate(params)}
        self.n = len(variables)
        self.m = len(params)

    def parse(self, ts: TokenStream) -> SparsePolynomial:
        if ts.accept("-"):
            acc = -self._term(ts)
        else:
            ts.accept("+")
            acc = self._term(ts)
        while ts.at("+") or ts.at("-"):
            op = ts.next().text
            rhs = self._term(ts)
            acc = acc + rhs if op == "+" else acc - rhs
        return acc

    def _term(self, ts: TokenStream) -> SparsePolynomial:
        acc = self._unary(ts)
        while ts.at("*") or ts.at("/"):
            op = ts.next()
            rhs = self._unary(ts)
            if op.text == "*":
                try:
                    acc = multiply(acc, rhs)
                except ValueError:
                    ts.error("product of parameter-dependent factors: dynamics must be affine in the parameters", op)
            else:
                if rhs.is_parametric() or rhs.total_degree() > 0:
                    ts.error("division is only allowed by numeric constants", op)
                c = rhs.coefficient((0,) * self.n).constant if not rhs.is_zero() else 0.0
                if c == 0.0:
                    ts.error("division by zero", op)
                acc = acc.scale(1.0 / c)
        return acc

    def _unary(self, ts: TokenStream) -> SparsePolynomial:
        if ts.accept("-"):
            return -self._unary(ts)
        return self._power(ts)

    def _power(self, ts: TokenStream) -> SparsePolynomial:
        base = self._atom(ts)
        if ts.at("^"):
            op = ts.next()
            e = parse_int(ts)
            try:
                return power(base, e)
            except ValueError:
                ts.error("power of a parameter-dependent expression is not affine in the parameters", op)
        return base

    def _atom(self, ts: TokenStream) -> SparsePolynomial:
        tok = ts.peek
        if tok.kind == "NUM":
            ts.next()
            return SparsePolynomial.constant(float(tok.text), self.n, self.m)
        if tok.kind == "NAME":
            ts.next()
            if tok.text in self.variables:
                return SparsePolynomial.variable(self.variables[tok.text], self.n, self.m)
            if tok.text in self.params:
                return SparsePolynomial.parameter(self.params[tok.text], self.n, self.m)
            ts.error(f"unknown identifier {tok.text!r}", tok)
        if ts.accept("("):
            inner = self.parse(ts)
            ts.expect(")")
            return inner
        ts.error(f"expected an expression, found {ts.describe(tok)}")


def format_number(x: float) -> str:
    return repr(float(x))


def format_polynomial(p: SparsePolynomial, variables: Sequence[str], params: Sequence[str] = ()) -> str:
    """Text that :class:`ExprParser` reads back to an identical polynomial."""
    if p.is_zero():
        return "0.0"
    parts = []
    for idx, coeff in p.terms:
        lin = [f"{format_number(c)}*{params[j]}" for j, c in enumerate(coeff.linear) if c]
        if lin:
            cstr = "(" + " + ".join([format_number(coeff.constant)] + lin) + ")"
        else:
            cstr = format_number(coeff.constant)
        mono = [name if e == 1 else f"{name}^{e}" for name, e in zip(variables, idx) if e]
        parts.append("*".join([cstr] + mono))
    return " + ".join(parts)
