from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bundlereach.polynomial import AffineForm, SparsePolynomial

settings.register_profile("repo", derandomize=True, deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

MODELS = Path(__file__).resolve().parents[1] / "src" / "bundlereach" / "models"


@pytest.fixture
def models_dir() -> Path:
    return MODELS


def random_polynomial(rng: np.random.Generator, n: int, max_deg: int = 4, m: int = 0,
                      density: float = 0.5, scale: float = 5.0) -> SparsePolynomial:
    """Random polynomial with per-variable degree <= max_deg and coefficients in [-scale, scale]."""
    grid = np.indices([max_deg + 1] * n).reshape(n, -1).T
    keep = rng.random(len(grid)) < density
    keep[rng.integers(len(grid))] = True
    terms = {}
    for idx in grid[keep]:
        const = rng.uniform(-scale, scale)
        lin = rng.uniform(-scale, scale, m) * (rng.random(m) < 0.5)
        terms[tuple(int(e) for e in idx)] = AffineForm(const, lin)
    return SparsePolynomial(terms, n, m)
