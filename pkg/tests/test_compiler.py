import math
import os
from fractions import Fraction

import numpy as np
import pytest

from packbound.compiler import (
    PivotGenerationError,
    PivotPoint,
    assemble_sdp,
    block_arrays,
    build_constraint_blocks,
    compute_bound,
    emit_sdpa,
    first_block_normalization,
    generate_pivots,
    origin_objective_blocks,
    region_membership,
)
from packbound.grammar import tokenize_and_parse
from packbound.polys import GeometricParams

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


class TestRegionMembership:
    def test_interior_point(self, unit_params):
        assert region_membership((2, 2, 1), unit_params)

    def test_origin_outside(self, unit_params):
        assert not region_membership((0, 0, 0), unit_params)

    @pytest.mark.parametrize("r", [0.5, 1.0, 1.7])
    def test_diagonal_corner_outside(self, r):
        params = GeometricParams(r, 2.0 * r)
        r2 = params.r2
        assert not region_membership((r2, r2, r2), params)


class TestGeneratePivots:
    def test_single_pivot_in_region(self, unit_params):
        pts = generate_pivots(unit_params, 1, seed=0)
        assert len(pts) == 1
        assert region_membership(pts[0].as_tuple(), unit_params)

    def test_deterministic(self, params):
        a = generate_pivots(params, 50, seed=3)
        b = generate_pivots(params, 50, seed=3)
        assert a == b

    @pytest.mark.parametrize("scheme", ["plane", "grid3d"])
    def test_points_distinct_admissible_and_boxed(self, params, scheme):
        pts = generate_pivots(params, 40, seed=1, scheme=scheme)
        assert len(set(p.as_tuple() for p in pts)) == 40
        r2, R2 = params.r2, params.R2
        for p in pts:
            assert region_membership(p.as_tuple(), params)
            assert r2 <= p.h <= R2 and r2 <= p.v <= R2

    def test_k_must_be_positive(self, params):
        with pytest.raises(ValueError):
            generate_pivots(params, 0, seed=0)

    def test_unknown_scheme(self, params):
        with pytest.raises(ValueError):
            generate_pivots(params, 3, seed=0, scheme="cubic")

    def test_exhaustion_reports_found_count(self, params):
        with pytest.raises(PivotGenerationError) as err:
            generate_pivots(params, 9000, seed=0)
        assert err.value.found < err.value.requested == 9000


class TestConstraintBlocks:
    def test_constant_sentence_d0(self, params):
        s = tokenize_and_parse("P7 <EOS>")
        blocks = build_constraint_blocks(s, 0, PivotPoint.make(2, 2, 1), params)
        assert blocks == [((Fraction(1),),)]

    def test_constant_sentence_d2_outer_product(self, unit_params):
        s = tokenize_and_parse("P7 <EOS>")
        blocks = build_constraint_blocks(s, 2, PivotPoint.make(2, 2, 1), unit_params)
        u = (1, 1, 4, 1, 4, 4, 16)
        expected = tuple(tuple(Fraction(a * b) for b in u) for a in u)
        assert blocks == [expected]

    def test_vanishing_monomial_gives_zero_block(self, unit_params):
        s = tokenize_and_parse("P1 <EOS>")
        pivot = PivotPoint.make(1, 3, 0)  # h = r^2 makes P1 vanish
        blocks = build_constraint_blocks(s, 2, pivot, unit_params)
        assert all(x == 0 for row in blocks[0] for x in row)

    def test_degree_overflow_names_monomial(self, params):
        s = tokenize_and_parse("P1 <*> P1 <EOS>")
        with pytest.raises(ValueError, match="P1 <\\*> P1"):
            build_constraint_blocks(s, 2, PivotPoint.make(2, 2, 1), params)

    def test_rank_one_and_psd(self, params):
        rng = np.random.default_rng(5)
        sentences = ["P7 <EOS>", "P1 <ES> P2 <*> P4 <EOS>", "P3 <*> P2 <EOS>"]
        pivots = generate_pivots(params, 10, seed=2)
        for text in sentences:
            s = tokenize_and_parse(text)
            pivot = pivots[int(rng.integers(len(pivots)))]
            for mat in block_arrays(build_constraint_blocks(s, 4, pivot, params)):
                if not np.any(mat):
                    continue
                svals = np.linalg.svd(mat, compute_uv=False)
                assert svals[1] <= 1e-10 * svals[0]
                assert np.linalg.eigvalsh(mat).min() >= -1e-10 * svals[0]


class TestObjectiveBlocks:
    def test_constant_sentence(self, params):
        s = tokenize_and_parse("P7 <EOS>")
        assert origin_objective_blocks(s, 0, params) == [((Fraction(1),),)]

    def test_p3_monomial_zero_objective(self, params):
        s = tokenize_and_parse("P3 <*> P3 <EOS>")
        blocks = origin_objective_blocks(s, 4, params)
        assert all(x == 0 for row in blocks[0] for x in row)

    def test_p1_scaling_at_unit_r(self, unit_params):
        s = tokenize_and_parse("P1 <EOS>")
        blocks = origin_objective_blocks(s, 2, unit_params)
        # m(0,0,0) = (0 - 1)(0 - 1) = 1 and u0 = e1
        assert blocks[0][0][0] == 1
        assert sum(abs(x) for row in blocks[0] for x in row) == 1

    def test_normalization_targets_first_positive_block(self, params):
        s = tokenize_and_parse("P3 <ES> P1 <EOS>")  # P3 vanishes at the origin
        blocks = first_block_normalization(s, 4, params)
        assert all(x == 0 for row in blocks[0] for x in row)
        assert blocks[1][0][0] == params.r2 ** 2


class TestAssemble:
    def test_minimal_structure(self, params):
        s = tokenize_and_parse("P7 <EOS>")
        inst = assemble_sdp(s, params, n=8, d=0, K=1, seed=0)
        assert inst.block_dims == (1,)
        assert len(inst.constraints) == 1
        assert len(inst.normalization) == 1

    def test_block_dims_decrease_with_monomial_degree(self, params):
        s = tokenize_and_parse("P7 <ES> P2 <ES> P1 <ES> P1 <*> P2 <ES> P1 <*> P1 <EOS>")
        inst = assemble_sdp(s, params, n=8, d=4, K=3, seed=0)
        degrees = [m.degree for m in tokenize_and_parse(inst.meta.sentence).monomials]
        assert degrees == sorted(degrees)
        assert list(inst.block_dims) == sorted(inst.block_dims, reverse=True)
        assert len(set(zip(degrees, inst.block_dims))) == len(degrees)

    def test_meta_echoes_inputs(self, params):
        s = tokenize_and_parse("P1 <EOS>")
        inst = assemble_sdp(s, params, n=5, d=3, K=4, seed=9, pivot_scheme="plane")
        meta = inst.meta
        assert (meta.n, meta.d, meta.r, meta.R, meta.K, meta.seed) == (5, 3, 1.45, 2.0, 4, 9)
        assert meta.sentence == "P1 <EOS>"

    def test_zero_primal_satisfies_homogeneous_rows_only(self, params):
        from packbound.solver import _stack_rows

        s = tokenize_and_parse("P2 <*> P2 <EOS>")
        inst = assemble_sdp(s, params, n=8, d=4, K=6, seed=1)
        M, b, _, _ = _stack_rows(inst)
        violations = M @ np.zeros(M.shape[1]) - b
        assert np.all(violations[:-1] == 0.0)   # every homogeneous row holds at X = 0
        assert violations[-1] == -1.0           # only the normalization row is violated

    def test_nesting_principal_submatrices(self, params):
        s = tokenize_and_parse("P1 <ES> P2 <*> P2 <EOS>")
        pivots = generate_pivots(params, 5, seed=7)
        instances = {
            d: assemble_sdp(s, params, n=8, d=d, K=5, seed=7) for d in (2, 3, 4)
        }
        for d_small, d_big in [(2, 3), (3, 4), (2, 4)]:
            small, big = instances[d_small], instances[d_big]
            for row_s, row_b in zip(small.constraints, big.constraints):
                for mat_s, mat_b in zip(row_s, row_b):
                    k = len(mat_s)
                    assert tuple(tuple(row[:k]) for row in mat_b[:k]) == mat_s
            for mat_s, mat_b in zip(small.objective, big.objective):
                k = len(mat_s)
                assert tuple(tuple(row[:k]) for row in mat_b[:k]) == mat_s

    def test_canonicalizes_before_compiling(self, params):
        padded = tokenize_and_parse("P1 <*> P7 <*> P7 <EOS>")
        plain = tokenize_and_parse("P1 <EOS>")
        a = assemble_sdp(padded, params, n=8, d=2, K=3, seed=0)
        b = assemble_sdp(plain, params, n=8, d=2, K=3, seed=0)
        assert a == b


class TestComputeBound:
    def test_unit_everything(self):
        report = compute_bound(1.0, GeometricParams(1.0, 2.0), 1)
        assert report.bound == pytest.approx(1.0, abs=1e-15)

    def test_zero_objective(self, params):
        assert compute_bound(0.0, params, 8).bound == 0.0

    def test_three_dimensional_closed_form(self):
        report = compute_bound(1.0, GeometricParams(2.0, 3.0), 3)
        assert report.bound == pytest.approx(4 * math.pi / 3, rel=1e-12)

    def test_custom_scaling(self, params):
        report = compute_bound(2.0, params, 4, scaling_constant=0.5)
        assert report.bound == pytest.approx(1.0 * params.r**4 * 2 * 0.5)

    def test_rejects_non_finite(self, params):
        with pytest.raises(ValueError):
            compute_bound(math.inf, params, 8)


class TestEmitSdpa:
    def make_instance(self, params):
        s = tokenize_and_parse("P7 <ES> P1 <EOS>")
        return assemble_sdp(s, params, n=8, d=2, K=3, seed=0)

    def test_golden_fixture(self, unit_params):
        text = emit_sdpa(self.make_instance(unit_params))
        golden = os.path.join(FIXTURES, "golden_p7_p1_d2_k3.dat-s")
        with open(golden, "r", encoding="utf-8") as fh:
            assert text == fh.read()

    def test_reemission_identical(self, unit_params):
        inst = self.make_instance(unit_params)
        assert emit_sdpa(inst) == emit_sdpa(inst)

    def test_header_layout(self, params):
        inst = self.make_instance(params)
        lines = emit_sdpa(inst).splitlines()
        assert lines[0] == "4"            # K + 1 rows
        assert lines[1] == "2"            # blocks
        assert lines[2] == "7 1"          # |basis(2)| and |basis(2 - deg P1)|
        assert lines[3] == "0 0 0 1"      # K zeros then 1

    def test_entries_upper_triangular_and_ordered(self, params):
        inst = self.make_instance(params)
        rows = [ln.split() for ln in emit_sdpa(inst).splitlines()[4:]]
        keys = [(int(a), int(b), int(i), int(j)) for a, b, i, j, _ in rows]
        assert keys == sorted(keys)
        assert all(i <= j for _, _, i, j in keys)
