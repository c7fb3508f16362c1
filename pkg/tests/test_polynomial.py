import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from bundlereach.polynomial import (AffineForm, AffineMap, SparsePolynomial, add, compose_affine,
                                    compose_symbolic, evaluate, evaluate_many, multiply, placeholder_names,
                                    power)

from conftest import random_polynomial

X1 = SparsePolynomial.variable(0, 2)
X2 = SparsePolynomial.variable(1, 2)


def const(c, n=2, m=0):
    return SparsePolynomial.constant(c, n, m)


def to_sympy(p: SparsePolynomial, xs, ps=()):
    expr = 0
    for idx, c in p.terms:
        coeff = sp.Float(c.constant, 30) + sum(sp.Float(a, 30) * pj for a, pj in zip(c.linear, ps))
        mono = sp.Mul(*[x ** e for x, e in zip(xs, idx)])
        expr += coeff * mono
    return sp.expand(expr)


class TestAffineForm:
    def test_evaluation(self):
        assert AffineForm(1.0, [2.0, -1.0])([3.0, 4.0]) == 1.0 + 6.0 - 4.0

    def test_zero_linear_part_is_constant(self):
        assert AffineForm(3.0, [0.0, 0.0]).is_constant()
        assert not AffineForm(0.0, [0.0, 1.0]).is_constant()

    def test_product_of_parametric_forms_rejected(self):
        with pytest.raises(ValueError):
            AffineForm(0.0, [1.0]) * AffineForm(1.0, [1.0])


class TestAdd:
    def test_cancellation(self):
        assert add(X1 + const(2.0), -X1) == const(2.0)

    @given(st.integers(0, 2**31))
    def test_zero_is_identity(self, seed):
        p = random_polynomial(np.random.default_rng(seed), 2, 3, m=1)
        assert add(SparsePolynomial.zero(2, 1), p) == p

    def test_parametric_sum_agrees_pointwise(self):
        x1 = SparsePolynomial.variable(0, 2, 1)
        x2 = SparsePolynomial.variable(1, 2, 1)
        p1 = SparsePolynomial.parameter(0, 2, 1)
        lhs = add(multiply(x1, x2) + multiply(p1, x1), multiply(x1, x2))
        rng = np.random.default_rng(0)
        for _ in range(50):
            x, p = rng.uniform(-3, 3, 2), rng.uniform(-3, 3, 1)
            assert evaluate(lhs, x, p) == pytest.approx(2 * x[0] * x[1] + p[0] * x[0], rel=1e-12, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            add(X1, SparsePolynomial.variable(0, 3))
        with pytest.raises(ValueError):
            add(X1, SparsePolynomial.variable(0, 2, 1))


class TestMultiply:
    def test_square(self):
        assert multiply(X1, X1) == SparsePolynomial({(2, 0): 1.0}, 2)

    def test_single_parametric_factor(self):
        p1x1 = multiply(SparsePolynomial.parameter(0, 2, 1), SparsePolynomial.variable(0, 2, 1))
        out = multiply(p1x1, SparsePolynomial.variable(1, 2, 1))
        assert out == SparsePolynomial({(1, 1): AffineForm(0.0, [1.0])}, 2, 1)

    def test_difference_of_squares(self):
        out = multiply(X1 + const(1.0), X1 - const(1.0))
        assert out == SparsePolynomial({(2, 0): 1.0, (0, 0): -1.0}, 2)
        rng = np.random.default_rng(1)
        for x in rng.uniform(-4, 4, (20, 2)):
            assert evaluate(out, x) == pytest.approx(x[0] ** 2 - 1, abs=1e-12)

    def test_two_parametric_factors_rejected(self):
        p = SparsePolynomial.parameter(0, 2, 1)
        with pytest.raises(ValueError):
            multiply(p, p)

    def test_power(self):
        assert power(X1 + const(1.0), 2) == SparsePolynomial({(2, 0): 1.0, (1, 0): 2.0, (0, 0): 1.0}, 2)
        assert power(X1, 0) == const(1.0)


class TestEvaluate:
    def test_examples(self):
        assert evaluate(multiply(X1, X1) + X2.scale(2.0), [3.0, 1.0]) == 11.0
        assert evaluate(SparsePolynomial.zero(2, 1), [7.0, -2.0], [4.0]) == 0.0
        p = SparsePolynomial({(1, 1): AffineForm(0.0, [1.0])}, 2, 1)
        assert evaluate(p, [2.0, 3.0], [0.5]) == 3.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            evaluate(X1, [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            evaluate(SparsePolynomial.parameter(0, 2, 1), [1.0, 2.0], [])

    @given(st.integers(0, 2**31))
    def test_batch_matches_scalar(self, seed):
        rng = np.random.default_rng(seed)
        p = random_polynomial(rng, 3, 3, m=2)
        X, P = rng.uniform(-1, 1, (5, 3)), rng.uniform(-1, 1, (5, 2))
        np.testing.assert_allclose(evaluate_many(p, X, P), [evaluate(p, x, q) for x, q in zip(X, P)],
                                   rtol=1e-12, atol=1e-12)

    @given(st.integers(0, 2**31))
    def test_add_is_pointwise(self, seed):
        rng = np.random.default_rng(seed)
        p1, p2 = random_polynomial(rng, 2, 3, m=1), random_polynomial(rng, 2, 3, m=1)
        x, p = rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 1)
        lhs = evaluate(add(p1, p2), x, p)
        rhs = evaluate(p1, x, p) + evaluate(p2, x, p)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12 * (1 + abs(rhs)))


class TestCanonicalForm:
    def test_no_stored_zero(self):
        p = SparsePolynomial({(1, 0): 0.0, (0, 1): AffineForm(0.0, [0.0])}, 2, 1)
        assert p.is_zero() and p.terms == ()

    @given(st.integers(0, 2**31))
    def test_operations_never_store_zero(self, seed):
        rng = np.random.default_rng(seed)
        p1 = random_polynomial(rng, 2, 2, m=1)
        p2 = SparsePolynomial({idx: c.constant for idx, c in random_polynomial(rng, 2, 2).terms}, 2, 1)
        for q in (p1 - p1, add(p1, -p1), multiply(p1, p2), p1 + p2, multiply(p2, const(0.0, m=1))):
            assert all(not c.is_zero() for _, c in q.terms)

    def test_grlex_order(self):
        p = SparsePolynomial({(0, 2): 1.0, (1, 0): 1.0, (2, 0): 1.0, (0, 0): 1.0, (1, 1): 1.0}, 2)
        degrees = [sum(idx) for idx, _ in p.terms]
        assert degrees == sorted(degrees)

    def test_degree_vector(self):
        p = SparsePolynomial({(2, 0): 1.0, (1, 3): 1.0}, 2)
        assert p.degree_vector() == (2, 3)
        assert SparsePolynomial.zero(3).degree_vector() == (0, 0, 0)

    def test_invalid_index(self):
        with pytest.raises(ValueError):
            SparsePolynomial({(1,): 1.0}, 2)
        with pytest.raises(ValueError):
            SparsePolynomial({(-1, 0): 1.0}, 2)


class TestComposeAffine:
    def test_identity(self):
        assert compose_affine(X1, AffineMap.identity(2)) == X1

    def test_square_of_shifted_scaled(self):
        x = SparsePolynomial.variable(0, 1)
        out = compose_affine(multiply(x, x), AffineMap([1.0], [[2.0]]))
        assert out == SparsePolynomial({(2,): 4.0, (1,): 4.0, (0,): 1.0}, 1)

    def test_shear(self):
        v = AffineMap([0.0, 0.0], [[1.0, 0.0], [1.0, 1.0]])
        assert compose_affine(X1 + X2, v) == SparsePolynomial({(1, 0): 2.0, (0, 1): 1.0}, 2)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            compose_affine(X1, AffineMap.identity(3))

    def test_matches_sympy_expansion(self):
        rng = np.random.default_rng(7)
        xs = sp.symbols("x0:3")
        us = sp.symbols("u0:3")
        for _ in range(10):
            p = random_polynomial(rng, 3, 2, density=0.3)
            v = AffineMap(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, (3, 3)))
            subs = {xs[j]: sp.Float(v.base[j], 30) + sum(sp.Float(v.generators[j, k], 30) * us[k]
                                                          for k in range(3)) for j in range(3)}
            oracle = sp.Poly(sp.expand(to_sympy(p, xs).subs(subs)), *us)
            got = compose_affine(p, v)
            for monom, c in oracle.terms():
                assert got.coefficient(monom).constant == pytest.approx(float(c), rel=1e-10, abs=1e-10)
            assert len(got) <= len(oracle.terms()) + 0

    def test_random_points(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            n = int(rng.integers(1, 4))
            m = int(rng.integers(0, 3))
            p = random_polynomial(rng, n, 2, m=m, density=0.4, scale=2.0)
            v = AffineMap(rng.uniform(-1, 1, n), rng.uniform(-1, 1, (n, n)))
            u, q = rng.uniform(0, 1, n), rng.uniform(-1, 1, m)
            want = evaluate(p, v(u), q)
            assert evaluate(compose_affine(p, v), u, q) == pytest.approx(want, rel=1e-10, abs=1e-10)


class TestComposeSymbolic:
    def test_degree_one_structure(self):
        x = SparsePolynomial.variable(0, 2)
        sym = compose_symbolic(x)
        # variables: u0 u1 | q0 q1 | G00 G01 G10 G11
        assert sym.poly == SparsePolynomial({
            (0, 0, 1, 0, 0, 0, 0, 0): 1.0,
            (1, 0, 0, 0, 1, 0, 0, 0): 1.0,
            (0, 1, 0, 0, 0, 1, 0, 0): 1.0,
        }, 8)

    def test_instantiation_matches_direct(self):
        x = SparsePolynomial.variable(0, 1)
        v = AffineMap([1.0], [[2.0]])
        assert compose_symbolic(multiply(x, x)).instantiate(v) == compose_affine(multiply(x, x), v)

    def test_name_collision_rejected(self):
        assert placeholder_names(1) == ["q0", "G0_0"]
        with pytest.raises(ValueError):
            compose_symbolic(X1, names=["x", "q1"])

    def test_sir_step(self):
        from bundlereach.modelio import load_model_file
        from conftest import MODELS
        problem = load_model_file(MODELS / "sir_synth.model")
        v = problem.initial_set.template_parallelotope(0).to_generator_form()
        rng = np.random.default_rng(5)
        for f in problem.model.dynamics:
            inst = compose_symbolic(f).instantiate(v)
            direct = compose_affine(f, v)
            for idx, c in direct.terms:
                np.testing.assert_allclose(inst.coefficient(idx).coeffs, c.coeffs, rtol=1e-12, atol=1e-15)
            for _ in range(100):
                u, p = rng.uniform(0, 1, 3), rng.uniform(0, 1, 2)
                assert evaluate(inst, u, p) == pytest.approx(evaluate(direct, u, p), rel=1e-12, abs=1e-15)

    @given(st.integers(0, 2**31))
    def test_coefficientwise_equal(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 4))
        p = random_polynomial(rng, n, 2, m=1, density=0.4)
        v = AffineMap(rng.uniform(-1, 1, n), rng.uniform(-1, 1, (n, n)))
        inst, direct = compose_symbolic(p).instantiate(v), compose_affine(p, v)
        keys = {idx for idx, _ in inst.terms} | {idx for idx, _ in direct.terms}
        for idx in keys:
            a, b = np.array(inst.coefficient(idx).coeffs), np.array(direct.coefficient(idx).coeffs)
            np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)
