import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import qmc

from halkit.basis import (BasisFunction, BasisSet, DomainTransform, HalModel, build_basis, design_matrix,
                          evaluate, gram_entry, gram_matrix, l2_distance, sections, svn, svn_bruteforce)
from halkit.errors import ConsistencyError, DomainError, ShapeError, SizeError

from conftest import random_model


def naive_indicator(knot_full, x):
    return float(all(x[j] >= knot_full[j] for j in range(len(x))))


class TestBuildBasis:
    def test_column_count_two_points_two_dims(self):
        b = build_basis([[0.2, 0.4], [0.6, 0.8]])
        assert b.column_count == 2 * (2**2 - 1) + 1 == 7

    def test_single_point_single_dim(self):
        b = build_basis([[0.3]])
        assert b.column_count == 2
        assert b.column_function(0) is None
        assert b.column_function(1) == BasisFunction((0,), (0.3,))

    def test_shared_section_projection_is_merged(self):
        b = build_basis([[0.3, 0.5], [0.3, 0.9]])
        assert b.column_count == 6
        assert sum(f == BasisFunction((0,), (0.3,)) for f in b.functions) == 1

    def test_order_is_sections_then_points(self):
        x = np.array([[0.1, 0.2], [0.3, 0.4]])
        b = build_basis(x)
        expect = [(s, tuple(x[i, list(s)])) for s in sections(2) for i in range(2)]
        assert [(f.section, f.knot) for f in b.functions] == expect

    def test_sections_are_binary_mask_order(self):
        assert sections(3) == [(0,), (1,), (0, 1), (2,), (0, 2), (1, 2), (0, 1, 2)]

    def test_without_intercept(self):
        b = build_basis([[0.5]], include_intercept=False)
        assert b.column_count == 1 and not b.has_intercept

    @pytest.mark.parametrize("n,d", [(5, 1), (4, 2), (3, 3)])
    def test_generic_count(self, rng, n, d):
        b = build_basis(rng.uniform(size=(n, d)))
        assert b.column_count == n * (2**d - 1) + 1

    def test_zero_knot_collapses_to_lower_section(self):
        # knot 0 on section {0} is the constant, and (0, 0.5) on {0,1} equals 0.5 on {1}
        b = build_basis([[0.0, 0.5]])
        assert b.column_count == 2
        assert [f.section for f in b.functions] == [(1,)]

    def test_outside_cube_names_row_and_coordinate(self):
        with pytest.raises(DomainError, match="point 1 coordinate 0"):
            build_basis([[0.2, 0.3], [1.5, 0.1]])

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            build_basis(np.empty((0, 2)))

    def test_duplicate_functions_rejected(self):
        f = BasisFunction((0,), (0.4,))
        with pytest.raises(ConsistencyError):
            BasisSet(1, [f, f])

    def test_basis_function_validation(self):
        with pytest.raises(DomainError):
            BasisFunction((), ())
        with pytest.raises(DomainError):
            BasisFunction((1, 0), (0.1, 0.2))
        with pytest.raises(DomainError):
            BasisFunction((0,), (1.2,))
        with pytest.raises(ShapeError):
            BasisFunction((0, 1), (0.1,))


class TestEvaluate:
    def test_zero_model(self, rng):
        b = build_basis(rng.uniform(size=(4, 2)))
        m = HalModel(b, np.zeros(b.column_count), 0.0)
        assert np.all(m(rng.uniform(size=(10, 2))) == 0)

    def test_single_indicator(self):
        m = HalModel(BasisSet(1, [BasisFunction((0,), (0.5,))], False), [1.0], 1.0)
        assert evaluate(m, [0.49]) == 0.0
        assert evaluate(m, [0.5]) == 1.0

    def test_componentwise_order(self):
        m = HalModel(BasisSet(2, [BasisFunction((0, 1), (0.3, 0.4))], False), [2.0], 2.0)
        assert evaluate(m, [0.3, 0.4]) == 2.0
        assert evaluate(m, [0.3, 0.39]) == 0.0

    def test_dimension_mismatch(self):
        m = HalModel(BasisSet(2, [], True), [1.0], 1.0)
        with pytest.raises(ShapeError):
            evaluate(m, [0.1])
        with pytest.raises(ShapeError):
            m(np.zeros((3, 3)))

    def test_value_at_origin(self, rng):
        m = random_model(rng, 4, 2)
        knots = m.basis.knot_matrix
        at_zero = np.all(knots == 0, axis=1)
        assert evaluate(m, [0, 0]) == pytest.approx(m.beta[at_zero].sum(), abs=1e-15)

    def test_matches_naive_sum(self, rng):
        m = random_model(rng, 5, 3)
        x = rng.uniform(size=(20, 3))
        naive = [sum(b * naive_indicator(k, p) for b, k in zip(m.beta, m.basis.knot_matrix)) for p in x]
        assert np.allclose(m(x), naive, atol=1e-13)

    def test_right_continuous_with_left_limits(self, rng):
        m = random_model(rng, 4, 2)
        probe = rng.uniform(size=(5, 2))
        h = 1e-9
        for k in m.basis.knot_matrix[1:]:
            for j in range(2):
                for p in probe:
                    at = p.copy()
                    at[j] = k[j]
                    above, below = at.copy(), at.copy()
                    above[j] = min(k[j] + h, 1.0)
                    below[j] = max(k[j] - h, 0.0)
                    # the value from above equals the value at the knot
                    assert evaluate(m, above) == evaluate(m, at)
                    # the limit from below exists: nudging further changes nothing
                    further = below.copy()
                    further[j] = max(k[j] - 2 * h, 0.0)
                    if k[j] > 2 * h:
                        assert evaluate(m, below) == evaluate(m, further)


class TestDesignMatrix:
    def test_self_domination(self, rng):
        x = rng.uniform(size=(6, 3))
        b = build_basis(x, include_intercept=False)
        A = design_matrix(b, x)
        full = [i for i, f in enumerate(b.functions) if f.section == (0, 1, 2)]
        assert np.all(A[np.arange(6), full])

    def test_origin_points_hit_no_positive_knots(self):
        b = build_basis([[0.2, 0.7], [0.5, 0.1]])
        A = design_matrix(b, np.zeros((3, 2)))
        assert np.all(A[:, 0])
        assert not A[:, 1:].any()

    def test_lower_triangular_pattern(self):
        x = np.array([[0.2], [0.5], [0.8]])
        A = design_matrix(build_basis(x, False), x)
        assert np.array_equal(A, np.tril(np.ones((3, 3), dtype=bool)))

    def test_matches_naive(self, rng):
        x = rng.uniform(size=(7, 2))
        b = build_basis(x)
        q = rng.uniform(size=(9, 2))
        naive = np.array([[naive_indicator(k, p) for k in b.knot_matrix] for p in q])
        assert np.array_equal(design_matrix(b, q), naive.astype(bool))

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            design_matrix(build_basis([[0.1, 0.2]]), [[0.1, 0.2, 0.3]])


class TestNorms:
    def test_svn_examples(self):
        b = build_basis([[0.3], [0.6]])
        assert svn(HalModel(b, [0.5, -0.25, 0.25], 1.0)) == 1.0
        assert svn(HalModel(b, [0, 0, 0], 0.0)) == 0.0

    def test_bruteforce_single_jump(self):
        m = HalModel(BasisSet(1, [BasisFunction((0,), (0.5,))], False), [1.0], 1.0)
        assert svn_bruteforce(m) == pytest.approx(1.0, abs=1e-15)

    def test_bruteforce_corner_indicator(self):
        f = lambda p: ((p[:, 0] >= 0.5) & (p[:, 1] >= 0.5)).astype(float)
        assert svn_bruteforce(f, 2, [[0.5], [0.5]]) == pytest.approx(1.0, abs=1e-15)

    def test_bruteforce_constant(self):
        assert svn_bruteforce(lambda p: np.full(len(p), -2.5), 2, [[], []]) == 2.5

    def test_bruteforce_size_limit(self):
        grids = [np.linspace(0.05, 0.95, 12)] * 3
        with pytest.raises(SizeError):
            svn_bruteforce(lambda p: np.zeros(len(p)), 3, grids)
        ok = [np.linspace(0.1, 0.9, 11)] * 3
        assert svn_bruteforce(lambda p: np.zeros(len(p)), 3, ok) == 0.0

    def test_bruteforce_needs_grid_for_callable(self):
        with pytest.raises(ShapeError):
            svn_bruteforce(lambda p: p[:, 0])

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6), d=st.integers(1, 3))
    def test_norm_identity(self, seed, n, d):
        if d == 3 and n > 5:
            n = 5
        m = random_model(np.random.default_rng(seed), n, d)
        assert abs(svn(m) - svn_bruteforce(m)) <= 1e-12 * max(1.0, svn(m))


class TestGram:
    def test_entry_examples(self):
        assert gram_entry(BasisFunction((0,), (0.25,)), BasisFunction((0,), (0.5,)), 1) == 0.5
        assert gram_entry(BasisFunction((0,), (0.3,)), BasisFunction((1,), (0.4,)), 2) == pytest.approx(0.42)
        f = BasisFunction((0, 1), (0.2, 0.8))
        assert gram_entry(f, f, 2) == pytest.approx(0.16)
        assert gram_entry(None, None, 3) == 1.0

    def test_symmetric_psd(self, rng):
        for d in (1, 2, 3):
            n = {1: 39, 2: 13, 3: 5}[d]
            b = build_basis(rng.uniform(size=(n, d)))
            assert b.column_count <= 40
            G = gram_matrix(b)
            assert np.array_equal(G, G.T)
            assert np.linalg.eigvalsh(G).min() >= -1e-10

    def test_matrix_matches_entries(self, rng):
        b = build_basis(rng.uniform(size=(3, 2)))
        G = gram_matrix(b)
        for i, j in itertools.product(range(b.column_count), repeat=2):
            assert G[i, j] == pytest.approx(gram_entry(b.column_function(i), b.column_function(j), 2), abs=1e-15)

    def test_against_quasi_monte_carlo(self, rng):
        pts = qmc.Sobol(3, scramble=True, seed=11).random_base2(14)
        for _ in range(20):
            fa = BasisFunction((0, 2), tuple(rng.uniform(size=2)))
            fb = BasisFunction((1, 2), tuple(rng.uniform(size=2)))
            ka, kb = fa.full_knot(3), fb.full_knot(3)
            est = np.mean(np.all(pts >= ka, axis=1) & np.all(pts >= kb, axis=1))
            assert abs(gram_entry(fa, fb, 3) - est) <= 2e-3

    def test_l2_distance_against_quadrature(self, rng):
        a, b = random_model(rng, 3, 1), random_model(rng, 4, 1)
        grid = np.unique(np.concatenate([[0, 1], a.basis.knot_matrix[:, 0], b.basis.knot_matrix[:, 0]]))
        left = grid[:-1]
        diff2 = (a(left[:, None]) - b(left[:, None])) ** 2
        assert l2_distance(a, b) == pytest.approx(np.sqrt(diff2 @ np.diff(grid)), rel=1e-12)


class TestDomainTransform:
    def test_fit_apply_clip(self):
        t = DomainTransform.fit([[2.0, -1.0], [4.0, 1.0]])
        z, clipped = t.apply([[3.0, 0.0], [5.0, 0.0]])
        assert np.allclose(z, [[0.5, 0.5], [1.0, 0.5]])
        assert clipped == 1

    def test_constant_column(self):
        z, _ = DomainTransform.fit([[1.0], [1.0]]).apply([[1.0]])
        assert z[0, 0] == 0.0

    def test_identity(self):
        assert DomainTransform.identity(2).is_identity
