"""Signal temporal logic in positive normal form, over discrete time.

Atoms are ``g(x) <= 0`` with ``g`` affine in the state. There is no negation
node; ``G`` and ``F`` are primitives next to ``U``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .expr import ExprParser, ParseError, TokenStream, format_polynomial, parse_int, tokenize
from .polynomial import SparsePolynomial, evaluate_many


@dataclass(frozen=True)
class Interval:
    a: int
    b: int

    def __post_init__(self):
        if not (0 <= self.a <= self.b):
            raise ValueError(f"interval [{self.a},{self.b}] must satisfy 0 <= a <= b")

    def shift(self, k: int = 1) -> "Interval":
        return Interval(max(self.a - k, 0), self.b - k)


@dataclass(frozen=True)
class Atom:
    g: SparsePolynomial

    def __post_init__(self):
        if self.g.num_params:
            raise ValueError("atomic predicates must not depend on parameters")
        if self.g.total_degree() > 1:
            raise ValueError("atomic predicates must be affine in the state variables")


@dataclass(frozen=True)
class And:
    lhs: "Formula"
    rhs: "Formula"


@dataclass(frozen=True)
class Or:
    lhs: "Formula"
    rhs: "Formula"


@dataclass(frozen=True)
class Until:
    lhs: "Formula"
    rhs: "Formula"
    interval: Interval


@dataclass(frozen=True)
class Globally:
    sub: "Formula"
    interval: Interval


@dataclass(frozen=True)
class Eventually:
    sub: "Formula"
    interval: Interval


Formula = Union[Atom, And, Or, Until, Globally, Eventually]


def horizon(phi: Formula) -> int:
    """Steps past the evaluation time needed to decide ``phi``."""
    if isinstance(phi, Atom):
        return 0
    if isinstance(phi, (And, Or)):
        return max(horizon(phi.lhs), horizon(phi.rhs))
    if isinstance(phi, Until):
        return phi.interval.b + max(horizon(phi.lhs), horizon(phi.rhs))
    return phi.interval.b + horizon(phi.sub)


# parsing


class _FormulaParser:
    def __init__(self, ts: TokenStream, variables: Sequence[str]):
        self.ts = ts
        self.exprs = ExprParser(variables)
        self.n = len(variables)

    def formula(self) -> Formula:
        left = self.term()
        while self.ts.at("&&") or self.ts.at("||"):
            op = self.ts.next().text
            right = self.term()
            left = And(left, right) if op == "&&" else Or(left, right)
        return left

    def term(self) -> Formula:
        left = self.primary()
        while self.ts.at("U") and self.ts.ahead().text == "[":
            self.ts.next()
            iv = self.interval()
            right = self.primary()
            left = Until(left, right, iv)
        return left

    def interval(self) -> Interval:
        ts = self.ts
        start = ts.expect("[")
        a = parse_int(ts)
        ts.expect(",")
        b = parse_int(ts)
        ts.expect("]")
        if a > b:
            ts.error(f"malformed interval [{a},{b}]: lower bound exceeds upper bound", start)
        return Interval(a, b)

    def primary(self) -> Formula:
        ts = self.ts
        tok = ts.peek
        if tok.text in ("!", "~") or (tok.kind == "NAME" and tok.text == "not"):
            ts.error("negation is not supported: write the formula in positive normal form")
        if tok.kind == "NAME" and tok.text in ("G", "F") and ts.ahead().text == "[":
            ts.next()
            iv = self.interval()
            ts.expect("(")
            sub = self.formula()
            ts.expect(")")
            return Globally(sub, iv) if tok.text == "G" else Eventually(sub, iv)
        if tok.text == "(":
            save = ts.pos
            try:
                return self.atom()
            except ParseError as atom_err:
                atom_pos = ts.pos
                ts.pos = save
                try:
                    ts.expect("(")
                    inner = self.formula()
                    ts.expect(")")
                    return inner
                except ParseError as group_err:
                    raise (atom_err if atom_pos > ts.pos else group_err) from None
        return self.atom()

    def atom(self) -> Atom:
        ts = self.ts
        lhs = self.exprs.parse(ts)
        op = ts.peek
        if op.text not in ("<=", ">=", "<", ">"):
            ts.error(f"expected a comparison operator, found {ts.describe(op)}")
        ts.next()
        rhs = self.exprs.parse(ts)
        g = lhs - rhs if op.text in ("<=", "<") else rhs - lhs
        if g.total_degree() > 1:
            ts.error("atomic predicates must be affine in the state variables", op)
        return Atom(g)


def parse_formula_tokens(ts: TokenStream, variables: Sequence[str]) -> Formula:
    return _FormulaParser(ts, variables).formula()


def parse_formula(text: str, variables: Sequence[str]) -> Formula:
    """Parse ``text`` over the given state variable names.

    ``e1 <= e2`` becomes ``Atom(e1 - e2)``; ``e1 >= e2`` and ``e1 > e2``
    become ``Atom(e2 - e1)`` (strict comparisons are relaxed).
    """
    ts = TokenStream(tokenize(text))
    phi = parse_formula_tokens(ts, variables)
    if ts.peek.kind != "EOF":
        ts.error(f"unexpected {ts.describe(ts.peek)} after formula")
    return phi


def format_formula(phi: Formula, variables: Sequence[str]) -> str:
    """Fully parenthesised text that parses back to the same AST."""
    if isinstance(phi, Atom):
        return f"{format_polynomial(phi.g, variables)} <= 0"
    if isinstance(phi, And):
        return f"({format_formula(phi.lhs, variables)}) && ({format_formula(phi.rhs, variables)})"
    if isinstance(phi, Or):
        return f"({format_formula(phi.lhs, variables)}) || ({format_formula(phi.rhs, variables)})"
    if isinstance(phi, Until):
        iv = phi.interval
        return (f"({format_formula(phi.lhs, variables)}) U[{iv.a},{iv.b}] "
                f"({format_formula(phi.rhs, variables)})")
    op = "G" if isinstance(phi, Globally) else "F"
    return f"{op}[{phi.interval.a},{phi.interval.b}]({format_formula(phi.sub, variables)})"


# monitoring


def _atom_values(trajectory: np.ndarray, g: SparsePolynomial) -> np.ndarray:
    return evaluate_many(g, trajectory) <= 0.0


def _signal(traj: np.ndarray, phi: Formula, length: int) -> np.ndarray:
    """Boolean satisfaction of ``phi`` at times ``0..length-1``."""
    if isinstance(phi, Atom):
        return _atom_values(traj[:length], phi.g)
    if isinstance(phi, And):
        return _signal(traj, phi.lhs, length) & _signal(traj, phi.rhs, length)
    if isinstance(phi, Or):
        return _signal(traj, phi.lhs, length) | _signal(traj, phi.rhs, length)
    a, b = phi.interval.a, phi.interval.b
    if isinstance(phi, Until):
        s1 = _signal(traj, phi.lhs, length + b)
        s2 = _signal(traj, phi.rhs, length + b)
        out = np.zeros(length, dtype=bool)
        for k in range(length):
            for j in range(k + a, k + b + 1):
                if s2[j] and s1[k:j].all():
                    out[k] = True
                    break
        return out
    s = _signal(traj, phi.sub, length + b)
    windows = np.lib.stride_tricks.sliding_window_view(s, b - a + 1)[a:a + length]
    return windows.all(axis=1) if isinstance(phi, Globally) else windows.any(axis=1)


def monitor(trajectory, phi: Formula, k: int = 0) -> bool:
    """Does the trajectory satisfy ``phi`` at time ``k``?"""
    traj = np.atleast_2d(np.asarray(trajectory, dtype=float))
    need = k + horizon(phi) + 1
    if len(traj) < need:
        raise ValueError(f"trajectory of length {len(traj)} is too short: formula needs {need} samples from k={k}")
    return bool(_signal(traj, phi, k + 1)[k])
