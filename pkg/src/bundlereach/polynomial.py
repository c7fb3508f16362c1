"""Sparse multivariate polynomials whose coefficients are affine in parameters.

A polynomial ``sum_i a_i(p) x^i`` is stored as a map from exponent tuples to
:class:`AffineForm` coefficients. Keeping every coefficient affine in ``p``
means any Bernstein coefficient derived from it is affine in ``p`` too, so
bounding it over a polytope of parameters is a linear program.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

MultiIndex = tuple[int, ...]


class AffineForm:
    """``constant + sum_j linear[j] * p_j``."""

    __slots__ = ("coeffs",)

    def __init__(self, constant: float, linear: Sequence[float] = ()):
        self.coeffs = (float(constant),) + tuple(float(v) for v in linear)

    @classmethod
    def _raw(cls, coeffs: tuple[float, ...]) -> "AffineForm":
        obj = cls.__new__(cls)
        obj.coeffs = coeffs
        return obj

    @classmethod
    def from_array(cls, arr) -> "AffineForm":
        return cls._raw(tuple(float(v) for v in arr))

    @property
    def constant(self) -> float:
        return self.coeffs[0]

    @property
    def linear(self) -> tuple[float, ...]:
        return self.coeffs[1:]

    @property
    def num_params(self) -> int:
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not any(self.coeffs)

    def is_constant(self) -> bool:
        return not any(self.coeffs[1:])

    def __call__(self, pvals: Sequence[float] = ()) -> float:
        if len(pvals) != len(self.coeffs) - 1:
            raise ValueError(
                f"expected {len(self.coeffs) - 1} parameter values, got {len(pvals)}")
        return self.coeffs[0] + sum(c * p for c, p in zip(self.coeffs[1:], pvals))

    def __add__(self, other: "AffineForm") -> "AffineForm":
        return AffineForm._raw(tuple(a + b for a, b in zip(self.coeffs, other.coeffs)))

    def __sub__(self, other: "AffineForm") -> "AffineForm":
        return AffineForm._raw(tuple(a - b for a, b in zip(self.coeffs, other.coeffs)))

    def __neg__(self) -> "AffineForm":
        return AffineForm._raw(tuple(-a for a in self.coeffs))

    def scale(self, s: float) -> "AffineForm":
        return AffineForm._raw(tuple(s * a for a in self.coeffs))

    def __mul__(self, other: "AffineForm") -> "AffineForm":
        if other.is_constant():
            return self.scale(other.coeffs[0])
        if self.is_constant():
            return other.scale(self.coeffs[0])
        raise ValueError("product of two parameter-dependent coefficients is not affine in the parameters")

    def __eq__(self, other) -> bool:
        return isinstance(other, AffineForm) and self.coeffs == other.coeffs

    def __hash__(self) -> int:
        return hash(self.coeffs)

    def __repr__(self) -> str:
        return f"AffineForm({self.coeffs[0]!r}, {list(self.coeffs[1:])!r})"


def _grlex_key(idx: MultiIndex):
    return (sum(idx), idx)


class SparsePolynomial:
    """Immutable sparse polynomial in ``num_vars`` variables.

    Terms are kept in graded-lexicographic order and zero coefficients are
    never stored.
    """

    __slots__ = ("num_vars", "num_params", "_terms", "_hash", "_arrays")

    def __init__(self, terms: Mapping[MultiIndex, "AffineForm | float"] | Iterable = (),
                 num_vars: int = 1, num_params: int = 0):
        self.num_vars = int(num_vars)
        self.num_params = int(num_params)
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[MultiIndex, AffineForm] = {}
        for idx, coeff in items:
            idx = tuple(int(e) for e in idx)
            if len(idx) != self.num_vars:
                raise ValueError(f"multi-index {idx} has length {len(idx)}, expected {self.num_vars}")
            if any(e < 0 for e in idx):
                raise ValueError(f"negative exponent in {idx}")
            if not isinstance(coeff, AffineForm):
                coeff = AffineForm(coeff, (0.0,) * self.num_params)
            if coeff.num_params != self.num_params:
                raise ValueError("coefficient parameter count does not match polynomial")
            acc[idx] = acc[idx] + coeff if idx in acc else coeff
        self._terms = tuple(sorted(((k, v) for k, v in acc.items() if not v.is_zero()),
                                   key=lambda kv: _grlex_key(kv[0])))
        self._hash = None
        self._arrays = None

    @classmethod
    def _from_sorted(cls, terms, num_vars, num_params):
        obj = cls.__new__(cls)
        obj.num_vars = num_vars
        obj.num_params = num_params
        obj._terms = terms
        obj._hash = None
        obj._arrays = None
        return obj

    @classmethod
    def _from_dict(cls, acc: dict, num_vars: int, num_params: int):
        terms = tuple(sorted(((k, v) for k, v in acc.items() if not v.is_zero()),
                             key=lambda kv: _grlex_key(kv[0])))
        return cls._from_sorted(terms, num_vars, num_params)

    # constructors

    @classmethod
    def zero(cls, num_vars: int, num_params: int = 0) -> "SparsePolynomial":
        return cls._from_sorted((), num_vars, num_params)

    @classmethod
    def constant(cls, value: float, num_vars: int, num_params: int = 0) -> "SparsePolynomial":
        return cls({(0,) * num_vars: value}, num_vars, num_params)

    @classmethod
    def variable(cls, k: int, num_vars: int, num_params: int = 0) -> "SparsePolynomial":
        idx = [0] * num_vars
        idx[k] = 1
        return cls({tuple(idx): 1.0}, num_vars, num_params)

    @classmethod
    def parameter(cls, j: int, num_vars: int, num_params: int) -> "SparsePolynomial":
        lin = [0.0] * num_params
        lin[j] = 1.0
        return cls({(0,) * num_vars: AffineForm(0.0, lin)}, num_vars, num_params)

    @classmethod
    def linear(cls, coeffs: Sequence[float], constant: float = 0.0,
               num_params: int = 0) -> "SparsePolynomial":
        n = len(coeffs)
        terms: dict = {(0,) * n: constant}
        for k, c in enumerate(coeffs):
            idx = [0] * n
            idx[k] = 1
            terms[tuple(idx)] = c
        return cls(terms, n, num_params)

    # inspection

    @property
    def terms(self) -> tuple[tuple[MultiIndex, AffineForm], ...]:
        return self._terms

    def __iter__(self) -> Iterator[tuple[MultiIndex, AffineForm]]:
        return iter(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def as_dict(self) -> dict[MultiIndex, AffineForm]:
        return dict(self._terms)

    def coefficient(self, idx: MultiIndex) -> AffineForm:
        for k, v in self._terms:
            if k == tuple(idx):
                return v
        return AffineForm(0.0, (0.0,) * self.num_params)

    def is_zero(self) -> bool:
        return not self._terms

    def is_parametric(self) -> bool:
        return any(not c.is_constant() for _, c in self._terms)

    def degree_vector(self) -> MultiIndex:
        if not self._terms:
            return (0,) * self.num_vars
        return tuple(max(col) for col in zip(*(k for k, _ in self._terms)))

    def total_degree(self) -> int:
        return max((sum(k) for k, _ in self._terms), default=0)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Exponents ``(T, n)`` and coefficients ``(T, m+1)`` as arrays."""
        if self._arrays is None:
            exps = np.array([k for k, _ in self._terms], dtype=np.int64).reshape(-1, self.num_vars)
            coeffs = np.array([c.coeffs for _, c in self._terms], dtype=float).reshape(-1, self.num_params + 1)
            exps.flags.writeable = False
            coeffs.flags.writeable = False
            self._arrays = (exps, coeffs)
        return self._arrays

    def __eq__(self, other) -> bool:
        return (isinstance(other, SparsePolynomial)
                and self.num_vars == other.num_vars
                and self.num_params == other.num_params
                and self._terms == other._terms)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.num_vars, self.num_params, self._terms))
        return self._hash

    def __repr__(self) -> str:
        return f"SparsePolynomial({dict(self._terms)!r}, num_vars={self.num_vars}, num_params={self.num_params})"

    def _check_compatible(self, other: "SparsePolynomial") -> None:
        if self.num_vars != other.num_vars or self.num_params != other.num_params:
            raise ValueError(
                f"dimension mismatch: ({self.num_vars} vars, {self.num_params} params) vs "
                f"({other.num_vars} vars, {other.num_params} params)")

    # arithmetic

    def __add__(self, other: "SparsePolynomial") -> "SparsePolynomial":
        return add(self, other)

    def __sub__(self, other: "SparsePolynomial") -> "SparsePolynomial":
        return add(self, -other)

    def __neg__(self) -> "SparsePolynomial":
        return SparsePolynomial._from_sorted(tuple((k, -v) for k, v in self._terms),
                                             self.num_vars, self.num_params)

    def __mul__(self, other: "SparsePolynomial") -> "SparsePolynomial":
        return multiply(self, other)

    def scale(self, s: float) -> "SparsePolynomial":
        if s == 0:
            return SparsePolynomial.zero(self.num_vars, self.num_params)
        return SparsePolynomial._from_sorted(tuple((k, v.scale(s)) for k, v in self._terms),
                                             self.num_vars, self.num_params)

    def __call__(self, x: Sequence[float], pvals: Sequence[float] = ()) -> float:
        return evaluate(self, x, pvals)


def add(p1: SparsePolynomial, p2: SparsePolynomial) -> SparsePolynomial:
    p1._check_compatible(p2)
    acc = dict(p1._terms)
    for k, v in p2._terms:
        acc[k] = acc[k] + v if k in acc else v
    return SparsePolynomial._from_dict(acc, p1.num_vars, p1.num_params)


def multiply(p1: SparsePolynomial, p2: SparsePolynomial) -> SparsePolynomial:
    p1._check_compatible(p2)
    if p1.is_parametric() and p2.is_parametric():
        raise ValueError("both factors depend on parameters; the product would not be affine in them")
    acc: dict[MultiIndex, AffineForm] = {}
    for k1, v1 in p1._terms:
        for k2, v2 in p2._terms:
            k = tuple(a + b for a, b in zip(k1, k2))
            prod = v1 * v2
            acc[k] = acc[k] + prod if k in acc else prod
    return SparsePolynomial._from_dict(acc, p1.num_vars, p1.num_params)


def power(p: SparsePolynomial, e: int) -> SparsePolynomial:
    if e < 0:
        raise ValueError("negative exponent")
    result = SparsePolynomial.constant(1.0, p.num_vars, p.num_params)
    for _ in range(e):
        result = multiply(result, p)
    return result


def evaluate(p: SparsePolynomial, x: Sequence[float], pvals: Sequence[float] = ()) -> float:
    if len(x) != p.num_vars:
        raise ValueError(f"expected {p.num_vars} variable values, got {len(x)}")
    if len(pvals) != p.num_params:
        raise ValueError(f"expected {p.num_params} parameter values, got {len(pvals)}")
    total = 0.0
    for idx, coeff in p._terms:
        mono = 1.0
        for xv, e in zip(x, idx):
            if e:
                mono *= xv ** e
        total += coeff(pvals) * mono
    return total


def evaluate_many(p: SparsePolynomial, X: np.ndarray, P: np.ndarray | None = None) -> np.ndarray:
    """Vectorised evaluation at ``N`` points: ``X`` is ``(N, n)``, ``P`` is ``(N, m)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    exps, coeffs = p.arrays()
    if not len(exps):
        return np.zeros(len(X))
    monos = np.prod(X[:, None, :] ** exps[None, :, :], axis=2)
    if p.num_params:
        P = np.atleast_2d(np.asarray(P, dtype=float))
        cvals = coeffs[:, 0][None, :] + P @ coeffs[:, 1:].T
    else:
        cvals = np.broadcast_to(coeffs[:, 0], monos.shape)
    return np.sum(cvals * monos, axis=1)


@dataclass(frozen=True, eq=False)
class AffineMap:
    """``u -> base + generators @ u``; columns of ``generators`` are the g_j.

    The image of the unit box is the parallelotope spanned by the generators
    from the vertex ``base``.
    """

    base: np.ndarray
    generators: np.ndarray

    def __post_init__(self):
        base = np.array(self.base, dtype=float).reshape(-1)
        gens = np.array(self.generators, dtype=float).reshape(len(base), -1)
        if gens.shape != (len(base), len(base)):
            raise ValueError(f"generators must be {len(base)}x{len(base)}, got {gens.shape}")
        base.flags.writeable = False
        gens.flags.writeable = False
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "generators", gens)

    @classmethod
    def identity(cls, n: int) -> "AffineMap":
        return cls(np.zeros(n), np.eye(n))

    @property
    def dim(self) -> int:
        return len(self.base)

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self.base + u @ self.generators.T

    def __eq__(self, other) -> bool:
        return (isinstance(other, AffineMap) and np.array_equal(self.base, other.base)
                and np.array_equal(self.generators, other.generators))

    def __hash__(self):
        return hash((self.base.tobytes(), self.generators.tobytes()))


def _horner(terms, k: int, images, nv: int, m: int) -> SparsePolynomial:
    """Substitute ``images[k:]`` for variables ``k..`` of ``terms``, Horner-style."""
    if k == len(images):
        total = AffineForm._raw((0.0,) * (m + 1))
        for _, c in terms:
            total = total + c
        return SparsePolynomial({(0,) * nv: total}, nv, m)
    groups: dict[int, list] = {}
    for idx, c in terms:
        groups.setdefault(idx[k], []).append((idx, c))
    result = SparsePolynomial.zero(nv, m)
    for e in range(max(groups), -1, -1):
        if not result.is_zero():
            result = multiply(result, images[k])
        if e in groups:
            result = add(result, _horner(groups[e], k + 1, images, nv, m))
    return result


def compose_affine(p: SparsePolynomial, v: AffineMap) -> SparsePolynomial:
    """Return ``q(u) = p(v(u))`` as a polynomial in fresh variables ``u``."""
    n = p.num_vars
    if v.dim != n:
        raise ValueError(f"map dimension {v.dim} does not match {n} polynomial variables")
    m = p.num_params
    images = []
    for j in range(n):
        terms = {(0,) * n: v.base[j]}
        for k in range(n):
            idx = [0] * n
            idx[k] = 1
            terms[tuple(idx)] = v.generators[j, k]
        images.append(SparsePolynomial(terms, n, m))
    return _horner(p.terms, 0, images, n, m)


def placeholder_names(n: int) -> list[str]:
    """Names of the symbolic base (``q<j>``) and generator (``G<j>_<k>``) entries."""
    return [f"q{j}" for j in range(n)] + [f"G{j}_{k}" for j in range(n) for k in range(n)]


@dataclass(frozen=True, eq=False)
class SymbolicComposition:
    """``p(q + G u)`` with ``q`` and ``G`` left symbolic.

    ``poly`` has ``n + n + n*n`` variables ordered as ``u``, ``q``, then ``G``
    row-major. Numeric instantiation substitutes an :class:`AffineMap`.
    """

    source: SparsePolynomial
    poly: SparsePolynomial

    @property
    def n(self) -> int:
        return self.source.num_vars

    def placeholder_values(self, v: AffineMap) -> np.ndarray:
        if v.dim != self.n:
            raise ValueError(f"map dimension {v.dim} does not match {self.n}")
        return np.concatenate([v.base, v.generators.reshape(-1)])

    def instantiate(self, v: AffineMap) -> SparsePolynomial:
        n, m = self.n, self.source.num_params
        vals = self.placeholder_values(v)
        acc: dict[MultiIndex, AffineForm] = {}
        for idx, c in self.poly.terms:
            w = 1.0
            for val, e in zip(vals, idx[n:]):
                if e:
                    w *= val ** e
            if w == 0.0:
                continue
            key = idx[:n]
            term = c.scale(w)
            acc[key] = acc[key] + term if key in acc else term
        return SparsePolynomial._from_dict(acc, n, m)


def compose_symbolic(p: SparsePolynomial, names: Sequence[str] = ()) -> SymbolicComposition:
    """Compose ``p`` with a generic affine map whose entries stay symbolic.

    ``names`` lists identifiers already in use (state and parameter names);
    a clash with a placeholder name is rejected.
    """
    n, m = p.num_vars, p.num_params
    clash = set(names) & set(placeholder_names(n))
    if clash:
        raise ValueError(f"placeholder symbols collide with existing names: {sorted(clash)}")
    nv = n + n + n * n
    images = []
    for j in range(n):
        terms = {}
        idx = [0] * nv
        idx[n + j] = 1
        terms[tuple(idx)] = 1.0
        for k in range(n):
            idx = [0] * nv
            idx[k] = 1
            idx[2 * n + j * n + k] = 1
            terms[tuple(idx)] = 1.0
        images.append(SparsePolynomial(terms, nv, m))
    lifted = [(idx + (0,) * (nv - n), c) for idx, c in p.terms]
    return SymbolicComposition(p, _horner(lifted, 0, images, nv, m))
