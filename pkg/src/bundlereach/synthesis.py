"""Parameter synthesis by structural induction over STL formulas.

Atoms refine a parameter polytope with the constraints ``b_i(p) <= 0`` on the
parametric Bernstein coefficients of ``g(f(v(u), p))``. Because the atom is
composed with one application of ``f``, a formula checked against reach set
``X_k`` speaks about the states at time ``k + 1``: formulas are interpreted
over the trajectory that starts at ``x_1``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .bernstein import BernsteinCache
from .geometry import Bundle, EmptySetError, LinearSystem, LinearSystemSet, intersect, union
from .polynomial import SparsePolynomial
from .reachability import DivergenceError, Model, reach_step
from .stl import And, Atom, Eventually, Formula, Globally, Or, Until

log = logging.getLogger(__name__)


@dataclass
class SynthesisState:
    """Reach set at the current time together with the parameters still in play."""

    current_set: Bundle
    param_set: LinearSystem
    time: int = 0


@dataclass
class TraceEntry:
    node: str
    time: int
    members: int
    empty: bool


@dataclass
class Synthesizer:
    model: Model
    cache: BernsteinCache = field(default_factory=BernsteinCache)
    trace: list[TraceEntry] = field(default_factory=list)
    reach_steps: int = 0

    def _record(self, node: str, state: SynthesisState, result: LinearSystemSet) -> LinearSystemSet:
        entry = TraceEntry(node, state.time, len(result), result.is_empty)
        self.trace.append(entry)
        log.debug("%s at t=%d: %d member(s)%s", node, state.time, len(result),
                  " EMPTY" if result.is_empty else "")
        return result

    def _empty(self) -> LinearSystemSet:
        return LinearSystemSet((), dim=self.model.num_params)

    def _advance(self, state: SynthesisState, P: LinearSystem) -> SynthesisState:
        try:
            nxt = reach_step(self.model, state.current_set, P, self.cache)
        except DivergenceError as exc:
            raise DivergenceError(state.time + 1, f"reach set diverged at step {state.time + 1}") from exc
        self.reach_steps += 1
        return SynthesisState(nxt, P, state.time + 1)

    def composed_atom(self, atom: Atom) -> SparsePolynomial:
        """``g(f(x, p))`` for an affine atom ``g``."""
        g = atom.g
        if g.num_vars != self.model.dim:
            raise ValueError("atom dimension does not match the model")
        if g.total_degree() > 1 or g.num_params:
            raise ValueError("atoms must be affine and parameter-free")
        m = self.model.num_params
        c0 = g.coefficient((0,) * g.num_vars).constant if not g.is_zero() else 0.0
        acc = SparsePolynomial.constant(c0, self.model.dim, m)
        for k in range(self.model.dim):
            idx = [0] * self.model.dim
            idx[k] = 1
            ck = g.coefficient(tuple(idx)).constant
            if ck:
                acc = acc + self.model.dynamics[k].scale(ck)
        return acc

    def refine_atom(self, X: Bundle, P: LinearSystem, atom: Atom) -> LinearSystem:
        """Add ``b_i(p) <= 0`` for every template of ``X``; the result may be empty."""
        if X.is_empty:
            raise EmptySetError("reach set is empty")
        gf = self.composed_atom(atom)
        m = self.model.num_params
        rows, rhs = [], []
        box = None
        if m and not P.is_empty:
            box = P.bounding_box
        for t in range(len(X.templates)):
            v = X.template_parallelotope(t).to_generator_form()
            flat = self.cache.bernstein(gf, v).flat
            for coeff in np.unique(flat, axis=0):
                const, lin = coeff[0], coeff[1:]
                if not np.any(lin):
                    if const > 0:
                        return _empty_system(m)
                    continue
                if box is not None and _implied_by_box(lin, -const, box):
                    continue
                rows.append(lin)
                rhs.append(-const)
        if not rows:
            return P
        return P.add_constraints(np.array(rows), np.array(rhs))

    def synthesize(self, X0: Bundle, P0: LinearSystem, phi: Formula) -> LinearSystemSet:
        if P0.dim != self.model.num_params:
            raise ValueError(f"parameter set has dimension {P0.dim}, model has {self.model.num_params}")
        if X0.is_empty:
            raise EmptySetError("initial set is empty")
        if P0.is_empty:
            raise EmptySetError("initial parameter set is empty")
        return self._synth(SynthesisState(X0, P0, 0), phi)

    def _each(self, params: LinearSystemSet, fn) -> LinearSystemSet:
        result = self._empty()
        for member in params:
            result = union(result, fn(member))
        return result

    def _synth(self, state: SynthesisState, phi: Formula) -> LinearSystemSet:
        X, P = state.current_set, state.param_set
        if isinstance(phi, Atom):
            refined = self.refine_atom(X, P, phi)
            return self._record("atom", state, LinearSystemSet([refined], dim=P.dim))
        if isinstance(phi, And):
            left = self._synth(state, phi.lhs)
            if left.is_empty:
                return self._record("and", state, left)
            return self._record("and", state, intersect(left, self._synth(state, phi.rhs)))
        if isinstance(phi, Or):
            return self._record("or", state, union(self._synth(state, phi.lhs), self._synth(state, phi.rhs)))
        if isinstance(phi, Until):
            return self._record("until", state, self._until(state, phi.lhs, phi.rhs, phi.interval.a, phi.interval.b))
        if isinstance(phi, Globally):
            return self._record("globally", state, self._globally(state, phi.sub, phi.interval.a, phi.interval.b))
        if isinstance(phi, Eventually):
            return self._record("eventually", state, self._eventually(state, phi.sub, phi.interval.a, phi.interval.b))
        raise TypeError(f"not a formula: {phi!r}")

    def _until(self, state, lhs, rhs, a, b) -> LinearSystemSet:
        if a == 0 and b == 0:
            return self._synth(state, rhs)
        if a > 0:
            return self._each(self._synth(state, lhs),
                              lambda P1: self._until(self._advance(state, P1), lhs, rhs, a - 1, b - 1))
        now = self._synth(state, rhs)
        later = self._each(self._synth(state, lhs),
                           lambda P1: self._until(self._advance(state, P1), lhs, rhs, 0, b - 1))
        return union(now, later)

    def _globally(self, state, sub, a, b) -> LinearSystemSet:
        if a > 0:
            return self._globally(self._advance(state, state.param_set), sub, a - 1, b - 1)
        here = self._synth(state, sub)
        if b == 0:
            return here
        return self._each(here, lambda P1: self._globally(self._advance(state, P1), sub, 0, b - 1))

    def _eventually(self, state, sub, a, b) -> LinearSystemSet:
        if a > 0:
            return self._eventually(self._advance(state, state.param_set), sub, a - 1, b - 1)
        here = self._synth(state, sub)
        if b == 0:
            return here
        return union(here, self._eventually(self._advance(state, state.param_set), sub, 0, b - 1))


def _empty_system(m: int) -> LinearSystem:
    # 0 <= -1
    return LinearSystem(np.zeros((1, m)), np.array([-1.0]))


def _implied_by_box(lin: np.ndarray, rhs: float, box) -> bool:
    lo, hi = box
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        return False
    return float(np.where(lin > 0, lin * hi, lin * lo).sum()) <= rhs


def refine_atom(model: Model, X: Bundle, P: LinearSystem, atom: Atom,
                cache: BernsteinCache | None = None) -> LinearSystem:
    return Synthesizer(model, cache or BernsteinCache()).refine_atom(X, P, atom)


def synthesize(model: Model, X0: Bundle, P0: LinearSystem, phi: Formula,
               cache: BernsteinCache | None = None) -> LinearSystemSet:
    """Parameters in ``P0`` under which every trajectory from ``X0`` satisfies ``phi``.

    Sound but not complete: the result can be smaller than the true set.
    """
    return Synthesizer(model, cache or BernsteinCache()).synthesize(X0, P0, phi)
