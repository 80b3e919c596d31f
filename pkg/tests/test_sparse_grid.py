import numpy as np
import pytest

from darcy_moments import (LevelFamily, combination_terms, full_tensor_oracle,
                           grid_points, interp_1d, level_nodes, smolyak_build,
                           smolyak_eval, smolyak_eval_many, tensor_build)


@pytest.fixture
def family():
    return LevelFamily(0.5)


class TestLevels:
    def test_level_zero_nodes(self, family):
        assert np.allclose(level_nodes(family, 0), [0.0, 0.5, 1.0])

    def test_level_two_nodes(self, family):
        nodes = level_nodes(family, 2)
        assert len(nodes) == 9
        assert np.allclose(np.diff(nodes), 0.125)

    def test_nestedness(self, family):
        fine = set(level_nodes(family, 2).tolist())
        assert set(level_nodes(family, 1).tolist()) <= fine

    def test_bad_base(self):
        with pytest.raises(ValueError):
            LevelFamily(0.3)

    def test_integer_base_three(self):
        fam = LevelFamily(1.0 / 3.0)
        assert len(level_nodes(fam, 1)) == 7


class TestInterp1d:
    def test_linear_reproduction(self, family):
        nodes = level_nodes(family, 2)
        f = interp_1d(family, 2, nodes)          # data of g(y) = y
        ys = np.linspace(0, 1, 101)
        assert np.abs(f(ys) - ys).max() <= 1e-15

    def test_nodal_exactness(self, family):
        nodes = level_nodes(family, 3)
        vals = np.sin(5.0 * nodes)
        f = interp_1d(family, 3, vals)
        assert np.abs(f(nodes) - vals).max() <= 1e-15

    def test_quadratic_rate(self, family):
        ys = np.linspace(0, 1, 1001)
        errs = []
        for level in range(1, 7):
            nodes = level_nodes(family, level)
            f = interp_1d(family, level, nodes ** 2)
            errs.append(np.abs(f(ys) - ys ** 2).max())
        slope = np.polyfit([np.log(family.spacing(l)) for l in range(1, 7)],
                           np.log(errs), 1)[0]
        assert abs(slope - 2.0) <= 0.1

    def test_count_mismatch(self, family):
        with pytest.raises(ValueError):
            interp_1d(family, 2, np.zeros(5))


class TestCombination:
    def test_coefficients_k1(self):
        terms = combination_terms(3, 1)
        assert terms == [((3,), 1)]

    def test_coefficients_sum_to_one(self):
        for k, L in [(2, 1), (2, 4), (3, 2), (4, 3)]:
            assert sum(c for _, c in combination_terms(L, k)) == 1

    def test_admissible_band(self):
        for levels, _ in combination_terms(4, 3):
            assert 2 <= sum(levels) <= 4


class TestSmolyak:
    def test_k1_degenerates_to_interpolation(self, family):
        g = lambda y: float(np.sin(3.0 * y[0]))
        s = smolyak_build(family, 3, 1, g)
        f = interp_1d(family, 3, np.sin(3.0 * level_nodes(family, 3)))
        ys = np.linspace(0, 1, 57)
        diff = max(abs(smolyak_eval(s, (y,)) - f(y)) for y in ys)
        assert diff <= 1e-15

    @pytest.mark.parametrize("k,L", [(2, 3), (3, 2)])
    def test_combination_identity(self, family, k, L):
        target = lambda y: float(np.exp(np.prod(y)) + sum(y))
        s = smolyak_build(family, L, k, target)
        oracle = full_tensor_oracle(family, L, k, target)
        rng = np.random.default_rng(100 + k)
        for p in rng.random((100, k)):
            assert abs(smolyak_eval(s, tuple(p)) - oracle(tuple(p))) <= 1e-12

    def test_nodal_exactness(self, family):
        target = lambda y: float(np.cos(y[0]) * np.exp(y[1]))
        s = smolyak_build(family, 3, 2, target)
        pts, _ = grid_points(family, 3, 2)
        vals = smolyak_eval_many(s, pts)
        truth = np.array([target(tuple(p)) for p in pts])
        assert np.abs(vals - truth).max() <= 1e-12

    def test_level_zero_is_pure_tensor(self, family):
        target = lambda y: float(y[0] + 2.0 * y[1])
        s = smolyak_build(family, 0, 2, target)
        assert len(s.terms) == 1
        assert s.terms[0].levels == (0, 0)

    def test_partition_of_unity(self, family):
        s = smolyak_build(family, 3, 2, lambda y: 1.0)
        rng = np.random.default_rng(9)
        vals = smolyak_eval_many(s, rng.random((200, 2)))
        assert np.abs(vals - 1.0).max() <= 1e-13

    @pytest.mark.parametrize("L", [0, 1, 3])
    def test_multilinear_reproduction(self, family, L):
        target = lambda y: float((0.3 + 1.7 * y[0]) * (-0.5 + 0.9 * y[1]))
        s = smolyak_build(family, L, 2, target)
        rng = np.random.default_rng(21)
        pts = rng.random((100, 2))
        truth = np.array([target(tuple(p)) for p in pts])
        assert np.abs(smolyak_eval_many(s, pts) - truth).max() <= 1e-13

    def test_telescoping_shell(self, family):
        # S_L - S_{L-1} equals the |l| = L shell of difference tensors
        target = lambda y: float(np.exp(y[0] * y[1]))
        L = 3
        s_hi = smolyak_build(family, L, 2, target)
        s_lo = smolyak_build(family, L - 1, 2, target)
        hi_shell = full_tensor_oracle(family, L, 2, target)
        lo_shell = full_tensor_oracle(family, L - 1, 2, target)
        rng = np.random.default_rng(4)
        for p in rng.random((50, 2)):
            p = tuple(p)
            lhs = smolyak_eval(s_hi, p) - smolyak_eval(s_lo, p)
            rhs = hi_shell(p) - lo_shell(p)
            assert abs(lhs - rhs) <= 1e-12

    def test_vector_payload(self, family):
        target = lambda y: np.array([y[0], y[1], y[0] * y[1]])
        s = smolyak_build(family, 2, 2, target)
        got = smolyak_eval(s, (0.25, 0.75))
        assert np.allclose(got, [0.25, 0.75, 0.25 * 0.75], atol=1e-13)

    def test_payload_shape_mismatch(self, family):
        calls = []

        def target(y):
            calls.append(y)
            return np.zeros(2) if len(calls) == 1 else np.zeros(3)

        with pytest.raises(ValueError):
            smolyak_build(family, 1, 2, target)

    def test_target_called_once_per_node(self, family):
        seen = []

        def target(y):
            seen.append(tuple(y))
            return 0.0

        smolyak_build(family, 2, 2, target)
        assert len(seen) == len(set(seen))
        pts, _ = grid_points(family, 2, 2)
        assert len(seen) == len(pts)

    def test_invalid_arguments(self, family):
        with pytest.raises(ValueError):
            smolyak_build(family, -1, 2, lambda y: 0.0)
        with pytest.raises(ValueError):
            smolyak_build(family, 1, 0, lambda y: 0.0)


class TestGridPoints:
    def test_k1_is_level_grid(self, family):
        pts, _ = grid_points(family, 3, 1)
        assert np.allclose(pts.ravel(), level_nodes(family, 3))

    def test_union_count_k2_L1(self, family):
        # |X1 x X0 u X0 x X1| = 5*3 + 3*5 - 3*3 = 21
        pts, _ = grid_points(family, 1, 2)
        assert pts.shape == (21, 2)

    def test_points_in_unit_cube(self, family):
        pts, _ = grid_points(family, 2, 3)
        assert pts.min() >= 0.0 and pts.max() <= 1.0

    def test_sorted_deterministically(self, family):
        pts, _ = grid_points(family, 2, 2)
        order = np.lexsort(pts.T[::-1])
        assert np.array_equal(order, np.arange(len(pts)))

    def test_index_set(self, family):
        _, idx = grid_points(family, 2, 2)
        assert ((0, 0) in idx and (2, 0) in idx and (1, 1) in idx
                and (2, 1) not in idx)


class TestTensorBuild:
    def test_full_tensor_matches_target_on_grid(self, family):
        target = lambda y: float(np.sin(y[0] + 2 * y[1]))
        t = tensor_build(family, (2, 1), target)
        n1, n2 = family.n_nodes(2), family.n_nodes(1)
        assert t.n_nodes == n1 * n2
        for y in [(0.0, 0.5), (0.25, 1.0)]:
            assert abs(smolyak_eval(t, y) - target(y)) <= 1e-13
