from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from packbound.polys import (
    BASE_DEGREES,
    BasisElement,
    GeometricParams,
    Polynomial,
    base_values_at,
    basis_enumerate,
    basis_to_poly,
    degree_and_symmetry,
    evaluate_basis,
    make_base_polynomial,
    ring_combine,
)

from conftest import polynomials


def brute_force_basis_count(d: int) -> int:
    return sum(
        1
        for a in range(d + 1)
        for b in range(d + 1)
        for c in range(d + 1)
        if a + 2 * b + c <= d
    )


class TestGeometricParams:
    def test_valid(self):
        p = GeometricParams(1.0, 2.0)
        assert p.r2 == 1 and p.R2 == 4

    @pytest.mark.parametrize("r,R", [(2.0, 1.0), (1.0, 1.0), (0.0, 1.0), (-1.0, 2.0)])
    def test_requires_increasing_positive(self, r, R):
        with pytest.raises(ValueError):
            GeometricParams(r, R)


class TestBasePolynomials:
    def test_p7_is_one(self, params):
        assert make_base_polynomial(7, params) == Polynomial.constant(1)

    def test_p1_root_at_h_equals_r_squared(self, unit_params):
        assert make_base_polynomial(1, unit_params).evaluate((1, 5, 0)) == 0

    def test_p3_value(self, unit_params):
        # hv - w^2 at (2, 3, 1): 6 - 1 = 5
        assert make_base_polynomial(3, unit_params).evaluate((2, 3, 1)) == 5

    def test_index_out_of_range(self, params):
        for bad in (0, 8, -1):
            with pytest.raises(ValueError):
                make_base_polynomial(bad, params)

    def test_degrees_and_symmetry(self, params):
        for idx, expected_degree in enumerate(BASE_DEGREES, start=1):
            deg, sym = degree_and_symmetry(make_base_polynomial(idx, params))
            assert (deg, sym) == (expected_degree, True)

    def test_p4_symmetric(self, params):
        assert degree_and_symmetry(make_base_polynomial(4, params)) == (1, True)

    def test_h_minus_v_not_symmetric(self):
        p = Polynomial({(1, 0, 0): 1, (0, 1, 0): -1})
        assert degree_and_symmetry(p) == (1, False)

    def test_base_values_match_expansion(self, params):
        point = (Fraction(7, 4), Fraction(3), Fraction(-1, 2))
        vals = base_values_at(point, params)
        for idx in range(1, 8):
            assert vals[idx - 1] == make_base_polynomial(idx, params).evaluate(point)


class TestRingOps:
    def test_mul_by_one_is_identity(self, params):
        p3 = make_base_polynomial(3, params)
        assert ring_combine("mul", make_base_polynomial(7, params), p3) == p3

    def test_additive_inverse_is_zero(self, params):
        p = make_base_polynomial(2, params)
        assert ring_combine("add", p, p.scale(-1)).is_zero()

    def test_p2_squared_unit_r(self, unit_params):
        # (h + v - 2)^2 expanded by hand
        expected = Polynomial({
            (2, 0, 0): 1, (0, 2, 0): 1, (1, 1, 0): 2,
            (1, 0, 0): -4, (0, 1, 0): -4, (0, 0, 0): 4,
        })
        p2 = make_base_polynomial(2, unit_params)
        assert ring_combine("mul", p2, p2) == expected

    def test_unknown_op(self):
        with pytest.raises(ValueError):
            ring_combine("sub", Polynomial.zero(), Polynomial.zero())

    @given(p=polynomials(), q=polynomials())
    @settings(max_examples=150)
    def test_commutative(self, p, q):
        assert p + q == q + p
        assert p * q == q * p

    @given(p=polynomials(), q=polynomials(), s=polynomials())
    @settings(max_examples=100)
    def test_associative(self, p, q, s):
        assert (p + q) + s == p + (q + s)
        assert (p * q) * s == p * (q * s)

    @given(p=polynomials(), q=polynomials(),
           x=st.tuples(st.integers(-5, 5), st.integers(-5, 5), st.integers(-5, 5)))
    @settings(max_examples=150)
    def test_evaluation_is_ring_homomorphism(self, p, q, x):
        assert (p * q).evaluate(x) == p.evaluate(x) * q.evaluate(x)
        assert (p + q).evaluate(x) == p.evaluate(x) + q.evaluate(x)

    def test_evaluation_homomorphism_bulk(self):
        # coefficients are exact rationals, so equality here is exact
        import random

        rng = random.Random(314159)

        def rand_poly():
            return Polynomial({
                (rng.randint(0, 3), rng.randint(0, 3), rng.randint(0, 3)):
                    Fraction(rng.randint(-40, 40), rng.randint(1, 12))
                for _ in range(rng.randint(0, 5))
            })

        for _ in range(1000):
            p, q = rand_poly(), rand_poly()
            x = (rng.randint(-4, 4), rng.randint(-4, 4), rng.randint(-4, 4))
            assert (p * q).evaluate(x) == p.evaluate(x) * q.evaluate(x)


class TestEvaluate:
    def test_constant(self):
        assert Polynomial.constant(1).evaluate((3, -2, 17)) == 1

    def test_p2_vanishes_on_shell(self, unit_params):
        assert make_base_polynomial(2, unit_params).evaluate((1, 1, 99)) == 0

    def test_p5_value(self, unit_params):
        assert make_base_polynomial(5, unit_params).evaluate((3, 1, 0)) == 3


class TestBasis:
    def test_d0(self):
        assert basis_enumerate(0) == (BasisElement(0, 0, 0),)

    def test_d2_frozen_order(self):
        expected = [(0, 0, 0), (1, 0, 0), (0, 0, 1), (2, 0, 0), (1, 0, 1), (0, 1, 0), (0, 0, 2)]
        assert [(e.a, e.b, e.c) for e in basis_enumerate(2)] == expected

    @pytest.mark.parametrize("d", range(13))
    def test_counts_match_brute_force(self, d):
        assert len(basis_enumerate(d)) == brute_force_basis_count(d)

    def test_negative_degree_rejected(self):
        with pytest.raises(ValueError):
            basis_enumerate(-1)

    @given(d1=st.integers(0, 9), d2=st.integers(0, 9))
    @settings(max_examples=60)
    def test_prefix_nesting(self, d1, d2):
        if d1 > d2:
            d1, d2 = d2, d1
        small, large = basis_enumerate(d1), basis_enumerate(d2)
        assert large[: len(small)] == small
        if d1 < d2:
            assert len(small) < len(large)

    def test_basis_to_poly_constant(self):
        assert basis_to_poly(BasisElement(0, 0, 0)) == Polynomial.constant(1)

    def test_basis_to_poly_square_sum(self):
        expected = Polynomial({(2, 0, 0): 1, (1, 1, 0): 2, (0, 2, 0): 1})
        assert basis_to_poly(BasisElement(0, 0, 2)) == expected

    def test_basis_to_poly_single_term(self):
        assert basis_to_poly(BasisElement(1, 1, 0)) == Polynomial({(1, 1, 1): 1})

    @given(d=st.integers(0, 5))
    @settings(max_examples=20)
    def test_basis_polys_symmetric(self, d):
        for e in basis_enumerate(d):
            assert basis_to_poly(e).is_symmetric_hv()

    def test_evaluate_basis_matches_polys(self):
        point = (Fraction(5, 2), Fraction(3), Fraction(-7, 3))
        elems = basis_enumerate(4)
        values = evaluate_basis(elems, point)
        for e, val in zip(elems, values):
            assert val == basis_to_poly(e).evaluate(point)
