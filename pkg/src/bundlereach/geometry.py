"""Polytope representations: linear systems, unions of them, boxes,
parallelotopes and parallelotope bundles.

Every set here is immutable. Emptiness checks and offset tightening go
through the simplex in :mod:`bundlereach.linprog`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import linprog
from .polynomial import AffineMap

DET_TOL = 1e-10


class EmptySetError(ValueError):
    """Raised when an operation needs a nonempty set and gets an empty one."""


class DegenerateTemplateError(ValueError):
    """Raised when a template's directions are (nearly) linearly dependent."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.flags.writeable = False
    return arr


def _relative_det(U: np.ndarray) -> float:
    norms = np.prod(np.linalg.norm(U, axis=1))
    if norms == 0.0:
        return 0.0
    return abs(float(np.linalg.det(U))) / norms


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """The polytope ``{x : A x <= b}``."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float).reshape(-1)
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = A.reshape(len(b), A.shape[-1] if A.ndim == 2 else 0)
        if A.ndim != 2 or A.shape[0] != len(b):
            raise ValueError(f"{A.shape} constraint matrix does not match {len(b)} offsets")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "b", _frozen(b))

    @classmethod
    def trivial(cls, dim: int) -> "LinearSystem":
        """The whole space (no constraints); with ``dim == 0`` the single point of R^0."""
        return cls(np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def from_box(cls, lower: Sequence[float], upper: Sequence[float]) -> "LinearSystem":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        n = len(lower)
        eye = np.eye(n)
        A = np.empty((2 * n, n))
        A[0::2] = eye
        A[1::2] = -eye
        b = np.empty(2 * n)
        b[0::2] = upper
        b[1::2] = -lower
        return cls(A, b)

    @classmethod
    def point(cls, values: Sequence[float]) -> "LinearSystem":
        return cls.from_box(values, values)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def num_constraints(self) -> int:
        return self.A.shape[0]

    @cached_property
    def is_empty(self) -> bool:
        if self.num_constraints == 0:
            return False
        return not linprog.is_feasible(self.A, self.b)

    def maximize(self, direction) -> linprog.LPOutcome:
        return linprog.maximize(direction, self.A, self.b)

    @cached_property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Componentwise LP bounds; infinite where unbounded."""
        if self.is_empty:
            raise EmptySetError("bounding box of an empty set")
        lo = np.full(self.dim, -np.inf)
        hi = np.full(self.dim, np.inf)
        box = self.as_box
        if box is not None:
            return box
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = 1.0
            up = self.maximize(e)
            if up.optimal:
                hi[k] = up.value
            down = self.maximize(-e)
            if down.optimal:
                lo[k] = -down.value
        return _frozen(lo), _frozen(hi)

    @cached_property
    def as_box(self) -> tuple[np.ndarray, np.ndarray] | None:
        """``(lower, upper)`` if every row is axis-aligned and each axis is bounded both ways."""
        lo = np.full(self.dim, -np.inf)
        hi = np.full(self.dim, np.inf)
        for row, rhs in zip(self.A, self.b):
            nz = np.flatnonzero(row)
            if len(nz) == 0:
                if rhs < 0:
                    return None
                continue
            if len(nz) > 1:
                return None
            k = nz[0]
            if row[k] > 0:
                hi[k] = min(hi[k], rhs / row[k])
            else:
                lo[k] = max(lo[k], rhs / row[k])
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            return None
        if np.any(lo > hi):
            return None
        return _frozen(lo), _frozen(hi)

    def contains(self, x, tol: float = 1e-9) -> bool:
        return bool(np.all(self.A @ np.asarray(x, dtype=float) <= self.b + tol))

    def contains_many(self, X, tol: float = 1e-9) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.num_constraints == 0:
            return np.ones(len(X), dtype=bool)
        return np.all(X @ self.A.T <= self.b + tol, axis=1)

    def intersect(self, other: "LinearSystem") -> "LinearSystem":
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
        # repeated rows keep the tighter offset; without this nested
        # intersections grow the LPs without changing the set
        A = np.vstack([self.A, other.A]) + 0.0
        b = np.concatenate([self.b, other.b])
        first: dict[bytes, int] = {}
        keep: list[int] = []
        b = b.copy()
        for i, row in enumerate(A):
            key = row.tobytes()
            j = first.get(key)
            if j is None:
                first[key] = i
                keep.append(i)
            elif b[i] < b[j]:
                b[j] = b[i]
        return LinearSystem(A[keep], b[keep])

    def add_constraints(self, A, b) -> "LinearSystem":
        A = np.asarray(A, dtype=float).reshape(-1, self.dim)
        return self.intersect(LinearSystem(A, b))

    def __eq__(self, other) -> bool:
        return (isinstance(other, LinearSystem) and self.A.shape == other.A.shape
                and np.array_equal(self.A, other.A) and np.array_equal(self.b, other.b))

    __hash__ = None

    def __repr__(self) -> str:
        return f"LinearSystem({self.num_constraints} constraints, dim={self.dim})"

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist()}


class LinearSystemSet:
    """Finite union of polytopes; empty members are dropped on construction."""

    __slots__ = ("members", "dim")

    def __init__(self, members: Iterable[LinearSystem] = (), dim: int | None = None):
        members = list(members)
        dims = {m.dim for m in members}
        if len(dims) > 1:
            raise ValueError(f"members have different dimensions: {sorted(dims)}")
        if dim is None:
            if not dims:
                raise ValueError("dimension required for an empty set")
            dim = dims.pop()
        elif dims and dims.pop() != dim:
            raise ValueError("member dimension does not match declared dimension")
        self.dim = dim
        self.members = tuple(m for m in members if not m.is_empty)

    def __iter__(self) -> Iterator[LinearSystem]:
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)

    @property
    def is_empty(self) -> bool:
        return not self.members

    def contains(self, x, tol: float = 1e-9) -> bool:
        return any(m.contains(x, tol) for m in self.members)

    def contains_many(self, X, tol: float = 1e-9) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(len(X), dtype=bool)
        for m in self.members:
            out |= m.contains_many(X, tol)
        return out

    def __eq__(self, other) -> bool:
        return (isinstance(other, LinearSystemSet) and self.dim == other.dim
                and len(self) == len(other)
                and all(a == b for a, b in zip(self.members, other.members)))

    __hash__ = None

    def __repr__(self) -> str:
        return f"LinearSystemSet({len(self.members)} members, dim={self.dim})"


def intersect(s1: LinearSystemSet, s2: LinearSystemSet) -> LinearSystemSet:
    if s1.dim != s2.dim:
        raise ValueError(f"dimension mismatch: {s1.dim} vs {s2.dim}")
    return LinearSystemSet((a.intersect(b) for a in s1 for b in s2), dim=s1.dim)


def union(s1: LinearSystemSet, s2: LinearSystemSet) -> LinearSystemSet:
    if s1.dim != s2.dim:
        raise ValueError(f"dimension mismatch: {s1.dim} vs {s2.dim}")
    # exact duplicates add nothing to the union; first occurrence keeps its place
    members: list[LinearSystem] = []
    for m in s1.members + s2.members:
        if not any(m == k for k in members):
            members.append(m)
    return LinearSystemSet(members, dim=s1.dim)


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("lower and upper bounds differ in length")
        if np.any(lo > hi):
            raise ValueError(f"lower bound exceeds upper bound: {lo} > {hi}")
        object.__setattr__(self, "lower", _frozen(lo))
        object.__setattr__(self, "upper", _frozen(hi))

    @property
    def dim(self) -> int:
        return len(self.lower)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Box) and np.array_equal(self.lower, other.lower)
                and np.array_equal(self.upper, other.upper))

    __hash__ = None


def box_to_bundle(b: Box) -> "Bundle":
    n = b.dim
    return Bundle(np.eye(n), b.upper, -b.lower, [tuple(range(n))])


@dataclass(frozen=True, eq=False)
class Parallelotope:
    """``{x : -lower <= U x <= upper}`` with ``U`` square and nonsingular."""

    directions: np.ndarray
    upper: np.ndarray
    lower: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.directions, dtype=float)
        n = U.shape[0]
        if U.shape != (n, n):
            raise ValueError(f"parallelotope needs a square direction matrix, got {U.shape}")
        if _relative_det(U) < DET_TOL:
            raise DegenerateTemplateError("parallelotope directions are linearly dependent")
        object.__setattr__(self, "directions", _frozen(U))
        object.__setattr__(self, "upper", _frozen(np.asarray(self.upper, dtype=float).reshape(n)))
        object.__setattr__(self, "lower", _frozen(np.asarray(self.lower, dtype=float).reshape(n)))

    @property
    def dim(self) -> int:
        return self.directions.shape[0]

    def to_generator_form(self) -> AffineMap:
        """Base vertex with every lower constraint active, plus one generator per direction."""
        U = self.directions
        if _relative_det(U) < DET_TOL:
            raise DegenerateTemplateError("parallelotope directions are linearly dependent")
        base = np.linalg.solve(U, -self.lower)
        # U g_j = (upper_j + lower_j) e_j
        gens = np.linalg.solve(U, np.diag(self.upper + self.lower))
        return AffineMap(base, gens)

    @classmethod
    def from_generator_form(cls, directions, v: AffineMap) -> "Parallelotope":
        """Tightest offsets along ``directions`` for the image of the unit box under ``v``."""
        U = np.asarray(directions, dtype=float)
        proj = U @ v.generators
        upper = U @ v.base + np.clip(proj, 0, None).sum(axis=1)
        lower = -(U @ v.base + np.clip(proj, None, 0).sum(axis=1))
        return cls(U, upper, lower)

    def contains(self, x, tol: float = 1e-9) -> bool:
        y = self.directions @ np.asarray(x, dtype=float)
        return bool(np.all(y <= self.upper + tol) and np.all(-y <= self.lower + tol))


@dataclass(frozen=True, eq=False)
class Bundle:
    """Parallelotope bundle ``{x : -lower <= L x <= upper}``.

    ``templates`` lists ``n``-tuples of row indices of ``L``; each selects a
    parallelotope and the bundle equals their intersection.
    """

    directions: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    templates: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        L = np.asarray(self.directions, dtype=float)
        if L.ndim != 2:
            raise ValueError("directions must be a matrix")
        q, n = L.shape
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        if len(upper) != q or len(lower) != q:
            raise ValueError(f"expected {q} upper and lower offsets")
        if q < n:
            raise ValueError(f"bundle needs at least {n} directions, got {q}")
        templates = tuple(tuple(int(i) for i in t) for t in self.templates)
        if not templates:
            raise ValueError("bundle needs at least one template")
        covered = set()
        for k, t in enumerate(templates):
            if len(t) != n or len(set(t)) != n:
                raise ValueError(f"template {k} must list {n} distinct directions")
            if any(i < 0 or i >= q for i in t):
                raise ValueError(f"template {k} refers to a direction outside 0..{q - 1}")
            if _relative_det(L[list(t)]) < DET_TOL:
                raise DegenerateTemplateError(f"template {k} {t} has linearly dependent directions")
            covered.update(t)
        missing = set(range(q)) - covered
        if missing:
            raise ValueError(f"directions {sorted(missing)} are not used by any template")
        object.__setattr__(self, "directions", _frozen(L))
        object.__setattr__(self, "upper", _frozen(upper))
        object.__setattr__(self, "lower", _frozen(lower))
        object.__setattr__(self, "templates", templates)

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    @property
    def num_directions(self) -> int:
        return self.directions.shape[0]

    def with_offsets(self, upper, lower) -> "Bundle":
        return Bundle(self.directions, upper, lower, self.templates)

    def template_parallelotope(self, t: int) -> Parallelotope:
        idx = list(self.templates[t])
        return Parallelotope(self.directions[idx], self.upper[idx], self.lower[idx])

    def to_linear_system(self) -> LinearSystem:
        return LinearSystem(np.vstack([self.directions, -self.directions]),
                            np.concatenate([self.upper, self.lower]))

    @cached_property
    def is_empty(self) -> bool:
        if np.any(self.upper + self.lower < -1e-9 * (1 + np.abs(self.upper))):
            return True
        return self.to_linear_system().is_empty

    def widths(self) -> np.ndarray:
        return self.upper + self.lower

    def contains(self, x, tol: float = 1e-9) -> bool:
        y = self.directions @ np.asarray(x, dtype=float)
        return bool(np.all(y <= self.upper + tol) and np.all(-y <= self.lower + tol))

    def contains_many(self, X, tol: float = 1e-9) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(X, dtype=float)) @ self.directions.T
        return np.all((Y <= self.upper + tol) & (-Y <= self.lower + tol), axis=1)

    def canonicalize(self) -> "Bundle":
        """Tighten every offset to its LP optimum over the whole bundle.

        Offsets never grow. Raises :class:`EmptySetError` for an empty bundle.
        """
        if self.is_empty:
            raise EmptySetError("bundle is empty")
        q, n = self.directions.shape
        if q == n:
            # a lone parallelotope attains every offset already
            return self
        system = self.to_linear_system()
        upper = self.upper.copy()
        lower = self.lower.copy()
        for i, row in enumerate(self.directions):
            hi = system.maximize(row)
            if hi.optimal:
                upper[i] = min(upper[i], hi.value)
            lo = system.maximize(-row)
            if lo.optimal:
                lower[i] = min(lower[i], lo.value)
        return self.with_offsets(upper, lower)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Bundle) and self.templates == other.templates
                and self.directions.shape == other.directions.shape
                and np.array_equal(self.directions, other.directions)
                and np.array_equal(self.upper, other.upper)
                and np.array_equal(self.lower, other.lower))

    __hash__ = None

    def __repr__(self) -> str:
        return (f"Bundle({self.num_directions} directions, {len(self.templates)} templates, "
                f"dim={self.dim})")


def bundle_from_box_offsets(directions, templates, box: Box) -> Bundle:
    """Bundle whose offsets are the exact extent of ``box`` along each direction."""
    L = np.asarray(directions, dtype=float)
    pos = np.clip(L, 0, None)
    neg = np.clip(L, None, 0)
    upper = pos @ box.upper + neg @ box.lower
    lower = -(pos @ box.lower + neg @ box.upper)
    return Bundle(L, upper, lower, templates)
