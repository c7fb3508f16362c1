"""Dense two-phase simplex for small LPs ``max c.x s.t. A x <= b`` with free x.

Bland's rule keeps the pivot sequence deterministic and cycle-free. The
problems solved here have a handful of variables, so a plain tableau is
fast enough and has no platform-dependent behaviour.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PIVOT_TOL = 1e-9

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True, eq=False)
class LPProblem:
    """Maximise ``objective @ x`` subject to ``constraints @ x <= rhs``."""

    objective: np.ndarray
    constraints: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).reshape(-1)
        b = np.asarray(self.rhs, dtype=float).reshape(-1)
        A = np.asarray(self.constraints, dtype=float)
        if A.size == 0:
            A = A.reshape(len(b), len(c))
        if A.ndim != 2 or A.shape != (len(b), len(c)):
            raise ValueError(
                f"constraint matrix shape {A.shape} incompatible with "
                f"{len(b)} right-hand sides and {len(c)} variables")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ValueError("LP data must be finite")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "constraints", A)
        object.__setattr__(self, "rhs", b)


@dataclass(frozen=True)
class LPOutcome:
    status: str
    value: float = float("nan")
    point: np.ndarray | None = field(default=None, compare=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    piv = T[row]
    for i in range(T.shape[0]):
        if i != row:
            f = T[i, col]
            if f != 0.0:
                T[i] -= f * piv


def _run(T: np.ndarray, basis: list[int], ncols: int, budget: list[int]) -> str:
    """Maximise the objective encoded in the last row of ``T`` (reduced costs, ``z - c x``).

    Only columns ``< ncols`` may enter. Returns a status string.
    """
    m = T.shape[0] - 1
    obj = T[-1]
    while True:
        entering = -1
        for j in range(ncols):
            if obj[j] < -PIVOT_TOL:
                entering = j
                break
        if entering < 0:
            return OPTIMAL
        if budget[0] <= 0:
            return ITERATION_LIMIT
        budget[0] -= 1
        col = T[:m, entering]
        best_row, best_ratio = -1, np.inf
        for i in range(m):
            if col[i] > PIVOT_TOL:
                ratio = T[i, -1] / col[i]
                if ratio < best_ratio - 1e-12 or (
                        abs(ratio - best_ratio) <= 1e-12 and basis[i] < basis[best_row]):
                    best_row, best_ratio = i, ratio
        if best_row < 0:
            return UNBOUNDED
        _pivot(T, best_row, entering)
        basis[best_row] = entering


def solve(lp: LPProblem) -> LPOutcome:
    """Solve ``lp``; deterministic for identical inputs."""
    A, b, c = lp.constraints, lp.rhs, lp.objective
    r, n = A.shape
    if r == 0:
        if np.any(c != 0):
            return LPOutcome(UNBOUNDED)
        return LPOutcome(OPTIMAL, 0.0, np.zeros(n))

    # columns: x+ (n), x- (n), slacks (r), artificials (one per row with b < 0)
    neg = b < 0
    art_rows = np.flatnonzero(neg)
    nstd = 2 * n + r
    ncol = nstd + len(art_rows)
    T = np.zeros((r + 1, ncol + 1))
    T[:r, :n] = A
    T[:r, n:2 * n] = -A
    T[:r, 2 * n:nstd] = np.eye(r)
    T[:r, -1] = b
    T[art_rows, :nstd] *= -1.0
    T[art_rows, -1] *= -1.0
    basis = [2 * n + i for i in range(r)]
    for a, i in enumerate(art_rows):
        T[i, nstd + a] = 1.0
        basis[i] = nstd + a
    budget = [50 * (r + ncol)]

    if len(art_rows):
        # phase one: maximise -sum(artificials)
        T[-1, nstd:ncol] = 1.0
        for i in art_rows:
            T[-1] -= T[i]
        status = _run(T, basis, ncol, budget)
        if status == ITERATION_LIMIT:
            return LPOutcome(ITERATION_LIMIT)
        scale = 1.0 + float(np.max(np.abs(b)))
        if T[-1, -1] < -PIVOT_TOL * scale:
            return LPOutcome(INFEASIBLE)
        keep = []
        for i in range(r):
            if basis[i] >= nstd:
                cand = np.flatnonzero(np.abs(T[i, :nstd]) > PIVOT_TOL)
                if len(cand):
                    _pivot(T, i, int(cand[0]))
                    basis[i] = int(cand[0])
                    keep.append(i)
                # otherwise the row is redundant and dropped
            else:
                keep.append(i)
        T = np.vstack([T[keep][:, list(range(nstd)) + [ncol]], np.zeros((1, nstd + 1))])
        basis = [basis[i] for i in keep]

    cost = np.concatenate([c, -c, np.zeros(r)])
    T[-1, :] = 0.0
    T[-1, :nstd] = -cost
    for i, j in enumerate(basis):
        if cost[j] != 0.0:
            T[-1] += cost[j] * T[i]
    status = _run(T, basis, nstd, budget)
    if status != OPTIMAL:
        return LPOutcome(status)
    z = np.zeros(nstd)
    for i, j in enumerate(basis):
        z[j] = T[i, -1]
    x = z[:n] - z[n:2 * n]
    return LPOutcome(OPTIMAL, float(c @ x), x)


def maximize(objective, constraints, rhs) -> LPOutcome:
    return solve(LPProblem(objective, constraints, rhs))


def is_feasible(constraints, rhs) -> bool:
    """True iff ``{x : A x <= b}`` is nonempty (phase-one simplex)."""
    A = np.asarray(constraints, dtype=float)
    b = np.asarray(rhs, dtype=float).reshape(-1)
    if A.size == 0:
        A = A.reshape(len(b), -1)
    out = solve(LPProblem(np.zeros(A.shape[1]), A, b))
    if out.status == ITERATION_LIMIT:
        raise RuntimeError("simplex iteration limit reached during feasibility check")
    return out.status != INFEASIBLE
