"""Flowpipes of discrete-time polynomial systems over parallelotope bundles."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bernstein import BernsteinCache, max_affine
from .geometry import Bundle, DegenerateTemplateError, EmptySetError, LinearSystem
from .polynomial import SparsePolynomial, evaluate_many

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e30


class DivergenceError(RuntimeError):
    def __init__(self, step: int | None, message: str = ""):
        self.step = step
        super().__init__(message or f"offsets diverged at step {step}")


@dataclass(frozen=True, eq=False)
class Model:
    name: str
    state_vars: tuple[str, ...]
    param_vars: tuple[str, ...]
    dynamics: tuple[SparsePolynomial, ...]

    def __post_init__(self):
        object.__setattr__(self, "state_vars", tuple(self.state_vars))
        object.__setattr__(self, "param_vars", tuple(self.param_vars))
        object.__setattr__(self, "dynamics", tuple(self.dynamics))
        n, m = len(self.state_vars), len(self.param_vars)
        if len(set(self.state_vars) | set(self.param_vars)) != n + m:
            raise ValueError("variable and parameter names must be distinct")
        if len(self.dynamics) != n:
            raise ValueError(f"need one update per state variable ({n}), got {len(self.dynamics)}")
        for name, f in zip(self.state_vars, self.dynamics):
            if f.num_vars != n or f.num_params != m:
                raise ValueError(f"update of {name!r} has wrong variable or parameter count")

    @property
    def dim(self) -> int:
        return len(self.state_vars)

    @property
    def num_params(self) -> int:
        return len(self.param_vars)

    def direction_polynomial(self, direction: Sequence[float]) -> SparsePolynomial:
        """``direction . f(x, p)``."""
        acc = SparsePolynomial.zero(self.dim, self.num_params)
        for c, f in zip(direction, self.dynamics):
            if c:
                acc = acc + f.scale(float(c))
        return acc

    def step_many(self, X: np.ndarray, P: np.ndarray | None = None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.num_params:
            P = np.broadcast_to(np.atleast_2d(np.asarray(P, dtype=float)), (len(X), self.num_params))
        return np.stack([evaluate_many(f, X, P) for f in self.dynamics], axis=1)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Model) and self.name == other.name
                and self.state_vars == other.state_vars and self.param_vars == other.param_vars
                and self.dynamics == other.dynamics)

    __hash__ = None


@dataclass
class Flowpipe:
    steps: list[Bundle]
    model: Model | None = None
    params: LinearSystem | None = None
    step_times: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    def __getitem__(self, k: int) -> Bundle:
        return self.steps[k]


def simulate(model: Model, x0: Sequence[float], p: Sequence[float] = (), T: int = 0) -> np.ndarray:
    """Trajectory ``x_0 .. x_T`` as a ``(T+1, n)`` array."""
    return simulate_many(model, np.atleast_2d(np.asarray(x0, dtype=float)),
                         np.atleast_2d(np.asarray(p, dtype=float)) if model.num_params else None, T)[0]


def simulate_many(model: Model, X0: np.ndarray, P: np.ndarray | None, T: int) -> np.ndarray:
    """Batch of trajectories, shape ``(N, T+1, n)``; row ``k`` of ``P`` drives row ``k`` of ``X0``."""
    X = np.atleast_2d(np.asarray(X0, dtype=float))
    if X.shape[1] != model.dim:
        raise ValueError(f"initial states have dimension {X.shape[1]}, model has {model.dim}")
    if model.num_params:
        P = np.atleast_2d(np.asarray(P, dtype=float))
        if P.shape[1] != model.num_params:
            raise ValueError(f"parameters have dimension {P.shape[1]}, model has {model.num_params}")
        P = np.broadcast_to(P, (len(X), model.num_params))
    out = np.empty((len(X), T + 1, model.dim))
    out[:, 0] = X
    for k in range(T):
        X = model.step_many(X, P)
        out[:, k + 1] = X
    return out


def _direction_polys(model: Model, bundle: Bundle) -> list[SparsePolynomial]:
    return [model.direction_polynomial(row) for row in bundle.directions]


def _check_params(model: Model, P: LinearSystem | None) -> LinearSystem:
    if P is None:
        P = LinearSystem.trivial(model.num_params)
    if P.dim != model.num_params:
        raise ValueError(f"parameter set has dimension {P.dim}, model has {model.num_params} parameters")
    if P.is_empty:
        raise EmptySetError("parameter set is empty")
    return P


def reach_step(model: Model, X: Bundle, P: LinearSystem | None = None,
               cache: BernsteinCache | None = None,
               direction_polys: list[SparsePolynomial] | None = None) -> Bundle:
    """Over-approximate ``f(X, P)`` with a bundle sharing ``X``'s directions and templates.

    Each template parallelotope bounds every direction; the tightest bound
    across templates wins. The result is canonicalized.
    """
    if X.dim != model.dim:
        raise ValueError(f"bundle dimension {X.dim} does not match model dimension {model.dim}")
    P = _check_params(model, P)
    if X.is_empty:
        raise EmptySetError("reach set is empty")
    cache = cache if cache is not None else BernsteinCache()
    polys = direction_polys if direction_polys is not None else _direction_polys(model, X)
    q = X.num_directions
    upper = np.full(q, np.inf)
    lower = np.full(q, np.inf)
    for t in range(len(X.templates)):
        try:
            v = X.template_parallelotope(t).to_generator_form()
        except DegenerateTemplateError as exc:
            raise DegenerateTemplateError(f"template {t} {X.templates[t]}: {exc}") from exc
        for i, poly in enumerate(polys):
            flat = cache.bernstein(poly, v).flat
            upper[i] = min(upper[i], max_affine(P, flat))
            lower[i] = min(lower[i], max_affine(P, -flat))
    _check_divergence(upper, lower, step=None)
    return X.with_offsets(upper, lower).canonicalize()


def _check_divergence(upper, lower, step):
    offsets = np.concatenate([upper, lower])
    if not np.all(np.isfinite(offsets)) or np.max(np.abs(offsets)) > DIVERGENCE_LIMIT:
        where = f" at step {step}" if step is not None else ""
        raise DivergenceError(step, f"offsets exceeded {DIVERGENCE_LIMIT:g}{where}")


def compute_flowpipe(model: Model, X0: Bundle, P: LinearSystem | None = None, T: int = 0,
                     cache: BernsteinCache | None = None) -> Flowpipe:
    if T < 0:
        raise ValueError("number of steps must be nonnegative")
    P = _check_params(model, P)
    cache = cache if cache is not None else BernsteinCache()
    polys = _direction_polys(model, X0)
    steps = [X0]
    times = []
    X = X0
    for k in range(T):
        t0 = time.perf_counter()
        try:
            X = reach_step(model, X, P, cache, polys)
        except DivergenceError:
            raise DivergenceError(k + 1, f"offsets exceeded {DIVERGENCE_LIMIT:g} at step {k + 1}") from None
        steps.append(X)
        times.append(time.perf_counter() - t0)
        log.debug("step %d: %.4fs, widths %s", k + 1, times[-1], np.array2string(X.widths(), precision=4))
    return Flowpipe(steps, model, P, times)
