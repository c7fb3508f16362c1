"""Deterministic point samples inside sets, used by validation and tests.

Points come from an unscrambled Halton sequence so repeated runs draw the
same samples.
"""
from __future__ import annotations

import numpy as np
from scipy.stats import qmc

from .geometry import Bundle, LinearSystem, LinearSystemSet

MAX_ROUNDS = 64


def halton(n: int, dim: int, skip: int = 0) -> np.ndarray:
    """``n`` points of the ``dim``-dimensional Halton sequence in ``[0,1)^dim``."""
    if dim == 0:
        return np.zeros((n, 0))
    engine = qmc.Halton(dim, scramble=False)
    if skip:
        engine.fast_forward(skip)
    return engine.random(n)


def sample_box(lower, upper, n: int, skip: int = 0) -> np.ndarray:
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    return lo + halton(n, len(lo), skip) * (hi - lo)


def _rejection(n: int, dim: int, draw, accept) -> np.ndarray:
    # Halton points are drawn in batches until n are accepted.
    got: list[np.ndarray] = []
    count, skip = 0, 0
    batch = max(2 * n, 64)
    for _ in range(MAX_ROUNDS):
        pts = draw(batch, skip)
        skip += batch
        keep = pts[accept(pts)]
        got.append(keep)
        count += len(keep)
        if count >= n:
            return np.concatenate(got)[:n]
    raise ValueError(f"could only draw {count} of {n} samples: the set is too thin for rejection sampling")


def sample_bundle(bundle: Bundle, n: int) -> np.ndarray:
    """Points of ``bundle``, drawn through its first template and filtered by the others."""
    v = bundle.template_parallelotope(0).to_generator_form()
    if len(bundle.templates) == 1 and bundle.num_directions == bundle.dim:
        return v.base + halton(n, bundle.dim) @ v.generators.T
    return _rejection(n, bundle.dim,
                      lambda k, s: v.base + halton(k, bundle.dim, s) @ v.generators.T,
                      lambda pts: bundle.contains_many(pts, tol=1e-12))


def sample_system(system: LinearSystem, n: int) -> np.ndarray:
    """Points of a bounded polytope, by rejection from its bounding box."""
    if system.dim == 0:
        return np.zeros((n, 0))
    lo, hi = system.bounding_box
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("cannot sample an unbounded polytope")
    box = system.as_box
    if box is not None:
        return sample_box(box[0], box[1], n)
    return _rejection(n, system.dim,
                      lambda k, s: sample_box(lo, hi, k, s),
                      lambda pts: system.contains_many(pts, tol=1e-12))


def sample_system_set(sets: LinearSystemSet, n: int) -> np.ndarray:
    """``n`` points spread evenly over the members of ``sets``."""
    members = list(sets)
    if not members:
        raise ValueError("cannot sample an empty parameter set")
    counts = [n // len(members) + (1 if k < n % len(members) else 0) for k in range(len(members))]
    return np.concatenate([sample_system(m, c) for m, c in zip(members, counts) if c]
                          or [np.zeros((0, sets.dim))])
