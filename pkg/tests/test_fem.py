import numpy as np
import pytest

from darcy_moments import (FeFunction, FeSpace, assemble_laplacian, build_mesh,
                           evaluate, evaluate_gradient, fe_error, fe_norm,
                           fe_project, load_vector, solve_dirichlet,
                           stiffness_matrix)


def make_space(n, degree=1, d=1, quad_refine=1):
    return FeSpace(build_mesh(d, n), degree, quad_refine=quad_refine)


class TestMesh:
    def test_uniform_partition(self):
        mesh = build_mesh(1, 4)
        assert np.allclose(mesh.vertices, [0, 0.25, 0.5, 0.75, 1.0])

    def test_two_elements(self):
        mesh = build_mesh(1, 2)
        assert mesh.n_elements == 2
        assert len(mesh.vertices) == 3
        assert list(np.nonzero(mesh.boundary)[0]) == [0, 2]

    def test_square_triangle_count(self):
        mesh = build_mesh(2, 4)
        assert mesh.n_elements == 2 * 4 ** 2

    @pytest.mark.parametrize("n", [0, 1])
    def test_too_few_elements(self, n):
        with pytest.raises(ValueError):
            build_mesh(1, n)

    def test_bad_dimension(self):
        with pytest.raises(ValueError):
            build_mesh(3, 4)


class TestStiffness:
    def test_hand_assembled_n4(self):
        # h = 1/4: diagonal 2/h = 8, off-diagonal -1/h = -4 on interior dofs
        op = assemble_laplacian(make_space(4))
        expect = np.array([[8.0, -4.0, 0.0], [-4.0, 8.0, -4.0], [0.0, -4.0, 8.0]])
        assert np.allclose(op.matrix.toarray(), expect, atol=1e-12)

    def test_hand_assembled_n2(self):
        op = assemble_laplacian(make_space(2))
        assert op.matrix.shape == (1, 1)
        assert abs(op.matrix[0, 0] - 4.0) < 1e-12

    @pytest.mark.parametrize("degree,n", [(1, 7), (2, 5), (1, 16)])
    def test_symmetry_and_rowsums(self, degree, n):
        full = stiffness_matrix(make_space(n, degree))
        assert np.abs((full - full.T).toarray()).max() <= 1e-14
        # constants lie in the kernel before boundary elimination
        assert np.abs(np.asarray(full.sum(axis=1)).ravel()).max() <= 1e-12

    def test_d2_symmetry(self):
        full = stiffness_matrix(make_space(4, d=2))
        assert np.abs((full - full.T).toarray()).max() <= 1e-14


class TestSolve:
    def test_p1_nodal_exactness_constant_forcing(self):
        space = make_space(8)
        u = solve_dirichlet(assemble_laplacian(space), lambda x: np.ones_like(x))
        exact = 0.5 * space.dof_coords * (1.0 - space.dof_coords)
        assert np.abs(u.coeffs - exact).max() <= 1e-10

    def test_zero_rhs(self):
        space = make_space(8)
        u = solve_dirichlet(assemble_laplacian(space), lambda x: np.zeros_like(x))
        assert np.abs(u.coeffs).max() == 0.0

    def test_galerkin_orthogonality(self):
        space = make_space(32)
        op = assemble_laplacian(space)
        rhs = load_vector(space, lambda x: np.pi ** 2 * np.sin(np.pi * x))
        u = solve_dirichlet(op, rhs)
        res = op.matrix @ u.coeffs[space.interior] - rhs[space.interior]
        scale = max(1.0, np.abs(rhs).max())
        assert np.abs(res).max() <= 1e-10 * scale

    def test_boundary_values_zero(self):
        space = make_space(16, degree=2)
        u = solve_dirichlet(assemble_laplacian(space), lambda x: np.exp(x))
        assert u.coeffs[0] == 0.0 and u.coeffs[-1] == 0.0

    def _h1_error(self, n, degree):
        space = make_space(n, degree, quad_refine=4)
        u = solve_dirichlet(assemble_laplacian(space),
                            lambda x: np.pi ** 2 * np.sin(np.pi * x))
        gdiff = (space.gradients_at_quad(u.coeffs)
                 - np.pi * np.cos(np.pi * space.quad_x))
        return float(np.sqrt(np.sum(space.quad_w * gdiff ** 2)))

    @pytest.mark.parametrize("degree", [1, 2])
    def test_h1_rate(self, degree):
        ns = [8, 16, 32, 64]
        errs = [self._h1_error(n, degree) for n in ns]
        slope = np.polyfit(np.log([1.0 / n for n in ns]), np.log(errs), 1)[0]
        assert slope >= 0.9 * degree

    def test_d2_manufactured_solution(self):
        # -lap u = 2 pi^2 sin(pi x) sin(pi y)
        errs = []
        for n in (8, 16, 32):
            space = make_space(n, d=2)
            f = lambda p: 2 * np.pi ** 2 * np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])
            u = solve_dirichlet(assemble_laplacian(space), f)
            exact = (np.sin(np.pi * space.dof_coords[:, 0])
                     * np.sin(np.pi * space.dof_coords[:, 1]))
            errs.append(np.abs(u.coeffs - exact).max())
        assert errs[2] < errs[1] < errs[0]
        assert errs[2] < 4e-3


class TestEvaluate:
    def test_interpolant_of_identity(self):
        space = make_space(4)
        fn = fe_project(lambda x: x, space)
        assert abs(evaluate(fn, 0.3) - 0.3) < 1e-15
        assert abs(evaluate_gradient(fn, 0.63) - 1.0) < 1e-15

    def test_hat_function(self):
        space = make_space(2)
        fn = FeFunction(space, np.array([0.0, 1.0, 0.0]))
        assert abs(evaluate(fn, 0.25) - 0.5) < 1e-15
        assert abs(evaluate_gradient(fn, 0.25) - 2.0) < 1e-15

    def test_gradient_interface_convention(self):
        # at a shared vertex the element with the lower index wins
        space = make_space(2)
        fn = FeFunction(space, np.array([0.0, 1.0, 0.0]))
        assert abs(evaluate_gradient(fn, 0.5) - 2.0) < 1e-15
        assert abs(evaluate_gradient(fn, 0.0) - 2.0) < 1e-15

    def test_vectorized(self):
        space = make_space(8, degree=2)
        fn = fe_project(lambda x: x ** 2, space)
        xs = np.linspace(0, 1, 41)
        assert np.abs(evaluate(fn, xs) - xs ** 2).max() < 1e-13
        assert np.abs(evaluate_gradient(fn, xs) - 2 * xs).max() < 1e-12

    def test_outside_domain(self):
        fn = fe_project(lambda x: x, make_space(4))
        with pytest.raises(ValueError):
            evaluate(fn, 1.2)
        with pytest.raises(ValueError):
            evaluate_gradient(fn, -0.1)

    def test_d2_evaluate(self):
        space = make_space(4, d=2)
        fn = fe_project(lambda p: p[:, 0] + 2 * p[:, 1], space)
        pts = np.array([[0.3, 0.2], [0.5, 0.5], [1.0, 1.0]])
        assert np.abs(evaluate(fn, pts) - (pts[:, 0] + 2 * pts[:, 1])).max() < 1e-14
        grad = evaluate_gradient(fn, np.array([0.3, 0.7]))
        assert np.allclose(grad, [1.0, 2.0])


class TestNorms:
    def test_zero_function(self):
        space = make_space(8)
        zero = FeFunction(space, np.zeros(space.n_dofs))
        for kind in ("lp", "w1p-seminorm", "w1p"):
            assert fe_norm(zero, kind) == 0.0

    def test_l2_of_identity(self):
        fn = fe_project(lambda x: x, make_space(16))
        assert abs(fe_norm(fn, "lp", 2.0) - 1.0 / np.sqrt(3.0)) <= 1e-12

    def test_w12_seminorm_of_identity(self):
        fn = fe_project(lambda x: x, make_space(16))
        assert abs(fe_norm(fn, "w1p-seminorm", 2.0) - 1.0) <= 1e-13

    def test_bad_exponent(self):
        fn = fe_project(lambda x: x, make_space(4))
        with pytest.raises(ValueError):
            fe_norm(fn, "lp", 0.5)

    def test_bad_kind(self):
        fn = fe_project(lambda x: x, make_space(4))
        with pytest.raises(ValueError):
            fe_norm(fn, "h2")

    def test_quadrature_exact_at_2mu(self):
        # the rule must integrate x^{2 mu} exactly
        for mu, moment in ((1, 1.0 / 3.0), (2, 1.0 / 5.0)):
            space = make_space(5, mu)
            fn = fe_project(lambda x: x ** mu, space)
            assert abs(fe_norm(fn, "lp", 2.0) - np.sqrt(moment)) < 1e-14

    def test_fe_error_across_meshes(self):
        coarse = fe_project(lambda x: np.sin(np.pi * x), make_space(16))
        fine = fe_project(lambda x: np.sin(np.pi * x), make_space(64))
        e = fe_error(coarse, fine, "lp", 2.0)
        assert 0 < e < 5e-3
        assert fe_error(coarse, coarse, "w1p", 2.0) == 0.0


class TestProjection:
    def test_linear_exact(self):
        space = make_space(8)
        fn = fe_project(lambda x: x, space)
        assert np.array_equal(fn.coeffs, space.dof_coords)

    def test_quadratic_exact_p2(self):
        space = make_space(8, degree=2)
        fn = fe_project(lambda x: x ** 2, space)
        exact = fe_project(lambda x: x ** 2, space)
        assert fe_norm(fn - exact, "lp", 2.0) <= 1e-12
        assert np.abs(fn.coeffs - space.dof_coords ** 2).max() <= 1e-15

    def test_sin_w1p_rate(self):
        errs = []
        ns = [8, 16, 32, 64, 128]
        for n in ns:
            space = make_space(n, quad_refine=4)
            fn = fe_project(lambda x: np.sin(np.pi * x), space)
            gdiff = (space.gradients_at_quad(fn.coeffs)
                     - np.pi * np.cos(np.pi * space.quad_x))
            errs.append(float(np.sqrt(np.sum(space.quad_w * gdiff ** 2))))
        slope = np.polyfit(np.log([1.0 / n for n in ns]), np.log(errs), 1)[0]
        assert abs(slope - 1.0) <= 0.1

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            fe_project(lambda x: np.where(x > 0.5, np.inf, 1.0), make_space(4))
