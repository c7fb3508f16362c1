"""Reachability and parameter synthesis for discrete-time polynomial systems.

Reach sets are parallelotope bundles; image bounds come from Bernstein
coefficients of the dynamics composed with each parallelotope's generator
map, and parameter constraints are linear programs solved in-house.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .bernstein import BernsteinCache, BernsteinForm, enclosure_bounds, to_bernstein
from .geometry import (Box, Bundle, DegenerateTemplateError, EmptySetError, LinearSystem, LinearSystemSet,
                       Parallelotope, box_to_bundle, bundle_from_box_offsets)
from .linprog import LPOutcome, LPProblem, solve
from .polynomial import AffineForm, AffineMap, SparsePolynomial, compose_affine
from .reachability import DivergenceError, Flowpipe, Model, compute_flowpipe, reach_step, simulate
from .stl import Atom, monitor, parse_formula
from .synthesis import refine_atom, synthesize

__all__ = [
    "AffineForm", "AffineMap", "Atom", "BernsteinCache", "BernsteinForm", "Box", "Bundle",
    "DegenerateTemplateError", "DivergenceError", "EmptySetError", "Flowpipe", "LPOutcome", "LPProblem",
    "LinearSystem", "LinearSystemSet", "Model", "Parallelotope", "SparsePolynomial", "box_to_bundle",
    "bundle_from_box_offsets", "compose_affine", "compute_flowpipe", "enclosure_bounds", "monitor",
    "parse_formula", "reach_step", "refine_atom", "simulate", "solve", "synthesize", "to_bernstein",
]
