"""Bernstein coefficients on the unit box, with parameter-affine coefficients.

For ``pi(x) = sum_j a_j x^j`` with degree vector ``d``, the coefficient on grid
index ``i <= d`` is ``b_i = sum_{j <= i} C(i, j) / C(d, j) * a_j``. The weights
depend only on the support and on ``d``, so :class:`BernsteinCache` keeps
them, together with symbolic compositions, and reuses them across steps.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .geometry import EmptySetError, LinearSystem
from .polynomial import (AffineForm, AffineMap, MultiIndex, SparsePolynomial, SymbolicComposition,
                         compose_symbolic)


def binomial_ratio_table(d: int) -> np.ndarray:
    """``R[i, j] = C(i, j) / C(d, j)`` for ``0 <= j <= i <= d``, zero above the diagonal.

    Computed as ``prod_{t<j} (i - t) / (d - t)`` so nothing overflows.
    """
    R = np.zeros((d + 1, d + 1))
    for i in range(d + 1):
        r = 1.0
        R[i, 0] = 1.0
        for j in range(1, i + 1):
            r *= (i - j + 1) / (d - j + 1)
            R[i, j] = r
    return R


def grid_indices(degree: MultiIndex) -> np.ndarray:
    """All ``i <= degree`` in C order, shape ``(prod(d+1), n)``."""
    if not degree:
        return np.zeros((1, 0), dtype=np.int64)
    mesh = np.meshgrid(*[np.arange(dk + 1) for dk in degree], indexing="ij")
    return np.stack([g.reshape(-1) for g in mesh], axis=1)


def weight_table(support: np.ndarray, degree: MultiIndex) -> np.ndarray:
    """Matrix ``W`` with ``b = W @ a`` for coefficients ``a`` listed in ``support`` order."""
    grid = grid_indices(degree)
    W = np.ones((len(grid), len(support)))
    for k, dk in enumerate(degree):
        R = binomial_ratio_table(dk)
        W *= R[grid[:, k][:, None], support[:, k][None, :]]
    return W


@dataclass(frozen=True, eq=False)
class BernsteinForm:
    """Dense grid of Bernstein coefficients; ``coeffs`` has shape ``(*(d+1), m+1)``."""

    degree: MultiIndex
    coeffs: np.ndarray

    @property
    def num_params(self) -> int:
        return self.coeffs.shape[-1] - 1

    @property
    def flat(self) -> np.ndarray:
        """Coefficients as ``(grid size, m+1)``; column 0 is the constant part."""
        return self.coeffs.reshape(-1, self.coeffs.shape[-1])

    def coefficient(self, i: MultiIndex) -> AffineForm:
        return AffineForm.from_array(self.coeffs[tuple(i)])

    def items(self) -> Iterator[tuple[MultiIndex, AffineForm]]:
        for i in np.ndindex(*(d + 1 for d in self.degree)):
            yield tuple(int(v) for v in i), self.coefficient(i)

    def __neg__(self) -> "BernsteinForm":
        return BernsteinForm(self.degree, -self.coeffs)

    def evaluate(self, x, pvals=()) -> float:
        """Reconstruct ``sum_i b_i(p) B_{i,d}(x)`` at a point of the unit box."""
        from math import comb

        x = np.asarray(x, dtype=float)
        vals = self.flat[:, 0] + self.flat[:, 1:] @ np.asarray(pvals, dtype=float)
        grid = grid_indices(self.degree)
        basis = np.ones(len(grid))
        for k, dk in enumerate(self.degree):
            i = grid[:, k]
            basis *= np.array([comb(dk, int(v)) for v in i]) * x[k] ** i * (1 - x[k]) ** (dk - i)
        return float(vals @ basis)


def to_bernstein(p: SparsePolynomial, cache: "BernsteinCache | None" = None) -> BernsteinForm:
    exps, coeffs = p.arrays()
    d = p.degree_vector()
    if not len(exps):
        shape = tuple(dk + 1 for dk in d) + (p.num_params + 1,)
        return BernsteinForm(d, np.zeros(shape))
    W = cache.weights(exps, d) if cache is not None else weight_table(exps, d)
    b = W @ coeffs
    return BernsteinForm(d, b.reshape(tuple(dk + 1 for dk in d) + (p.num_params + 1,)))


def max_affine(P: LinearSystem | None, forms: np.ndarray) -> float:
    """``max_k max_{p in P} forms[k, 0] + forms[k, 1:] . p``.

    Box parameter sets are handled in closed form. For general polytopes,
    forms are visited in decreasing order of their bounding-box upper bound
    and the scan stops once no remaining form can beat the best LP value, so
    the result is the exact LP maximum.
    """
    forms = np.asarray(forms, dtype=float)
    m = forms.shape[1] - 1
    if m == 0 or not np.any(forms[:, 1:]):
        return float(np.max(forms[:, 0]))
    if P is None:
        raise ValueError("parametric coefficients need a parameter set")
    if P.dim != m:
        raise ValueError(f"parameter set has dimension {P.dim}, coefficients have {m}")
    box = P.as_box
    if box is not None:
        lo, hi = box
        lin = forms[:, 1:]
        return float(np.max(forms[:, 0] + np.where(lin > 0, lin * hi, lin * lo).sum(axis=1)))
    lo, hi = P.bounding_box
    lin = forms[:, 1:]
    with np.errstate(invalid="ignore"):
        ub = forms[:, 0] + np.where(lin > 0, lin * hi, np.where(lin < 0, lin * lo, 0.0)).sum(axis=1)
    _, first = np.unique(forms, axis=0, return_index=True)
    order = sorted(first, key=lambda k: (-ub[k], k))
    best = -np.inf
    for k in order:
        if ub[k] <= best:
            break
        out = P.maximize(forms[k, 1:])
        if out.status == "unbounded":
            return np.inf
        if not out.optimal:
            # fall back to the (sound) box bound
            val = ub[k]
        else:
            val = forms[k, 0] + out.value
        best = max(best, val)
    return float(best)


def enclosure_bounds(bf: BernsteinForm, P: LinearSystem | None = None) -> tuple[float, float]:
    """Lower and upper bounds of the polynomial over ``[0,1]^n x P``."""
    if P is not None and P.is_empty:
        raise EmptySetError("parameter set is empty; bounds would be vacuous")
    flat = bf.flat
    upper = max_affine(P, flat)
    lower = -max_affine(P, -flat)
    return lower, upper


class _Compiled:
    """Symbolic composition arranged for fast numeric instantiation.

    ``tensor[a, b, :]`` is the affine coefficient of ``u^alpha_a * w^beta_b``
    where ``w`` are the placeholder values of an affine map.
    """

    __slots__ = ("alphas", "betas", "tensor")

    def __init__(self, sym: SymbolicComposition):
        n = sym.n
        exps, coeffs = sym.poly.arrays()
        alpha_keys = sorted({tuple(e[:n]) for e in exps}, key=lambda k: (sum(k), k))
        beta_keys = sorted({tuple(e[n:]) for e in exps})
        a_index = {k: i for i, k in enumerate(alpha_keys)}
        b_index = {k: i for i, k in enumerate(beta_keys)}
        tensor = np.zeros((len(alpha_keys), len(beta_keys), coeffs.shape[1]))
        for e, c in zip(exps, coeffs):
            tensor[a_index[tuple(e[:n])], b_index[tuple(e[n:])]] += c
        self.alphas = np.array(alpha_keys, dtype=np.int64).reshape(-1, n)
        self.betas = np.array(beta_keys, dtype=np.int64).reshape(len(beta_keys), -1)
        self.tensor = tensor


class BernsteinCache:
    """Memoises weight tables per ``(support, degree)`` and symbolic compositions per polynomial.

    Hits return the very same arrays as the first computation. Insertion is
    guarded by a lock so concurrent readers see consistent entries.
    """

    def __init__(self):
        self._weights: dict = {}
        self._compiled: dict = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        self.composition_hits = 0
        self.composition_misses = 0

    def weights(self, support: np.ndarray, degree: MultiIndex) -> np.ndarray:
        key = (support.tobytes(), support.shape, tuple(degree))
        W = self._weights.get(key)
        if W is not None:
            self.hits += 1
            return W
        with self._lock:
            W = self._weights.get(key)
            if W is None:
                self.misses += 1
                W = weight_table(support, degree)
                W.flags.writeable = False
                self._weights[key] = W
            else:
                self.hits += 1
        return W

    def compiled(self, p: SparsePolynomial) -> _Compiled:
        entry = self._compiled.get(p)
        if entry is not None:
            self.composition_hits += 1
            return entry
        with self._lock:
            entry = self._compiled.get(p)
            if entry is None:
                self.composition_misses += 1
                entry = _Compiled(compose_symbolic(p))
                self._compiled[p] = entry
        return entry

    def bernstein(self, p: SparsePolynomial, v: AffineMap) -> BernsteinForm:
        """Bernstein form of ``p(v(u))`` via the cached symbolic composition."""
        return cached_bernstein(self, p, v)

    def __len__(self) -> int:
        return len(self._weights)


def cached_bernstein(cache: BernsteinCache, p: SparsePolynomial | SymbolicComposition,
                     bindings: AffineMap) -> BernsteinForm:
    """Instantiate the symbolic composition of ``p`` at ``bindings`` and convert.

    Equal (to rounding) to ``to_bernstein(compose_affine(p, bindings))``; the
    degree is taken from the instantiated support, exactly as the direct path.
    """
    if isinstance(p, SymbolicComposition):
        p = p.source
    if not isinstance(bindings, AffineMap):
        raise ValueError("bindings must be an AffineMap giving every base and generator entry")
    n, m = p.num_vars, p.num_params
    if bindings.dim != n:
        raise ValueError(f"bindings have dimension {bindings.dim}, polynomial has {n} variables")
    comp = cache.compiled(p)
    w = np.concatenate([bindings.base, bindings.generators.reshape(-1)])
    if len(comp.betas):
        monos = np.prod(w[None, :] ** comp.betas, axis=1)
        c = np.einsum("abk,b->ak", comp.tensor, monos)
    else:
        c = np.zeros((0, m + 1))
    nz = np.any(c != 0.0, axis=1)
    support, c = comp.alphas[nz], c[nz]
    if not len(support):
        return BernsteinForm((0,) * n, np.zeros((1,) * n + (m + 1,)))
    d = tuple(int(v) for v in support.max(axis=0))
    W = cache.weights(np.ascontiguousarray(support), d)
    return BernsteinForm(d, (W @ c).reshape(tuple(dk + 1 for dk in d) + (m + 1,)))
