import numpy as np
import pytest

from prodopt import cca, geometry, linalg, solvers
from prodopt.geometry import GeneralizedStiefel


def small_problem(tag="LR12", seed=0, dx=9, dy=7, m=2, n=40):
    rng = np.random.default_rng(seed)
    x = rng.random((n, dx))
    y = rng.random((n, dy))
    return cca.build_from_data(x, y, 1e-3, 1e-3, m, metric_tag=tag)


def random_feasible(problem, seed):
    rng = np.random.default_rng(seed)
    mp = cca.make_manifold_problem(problem)
    return geometry.random_point(mp.kinds, rng)


class TestBuildFromData:
    def test_identity_slice(self):
        x = np.eye(4)
        problem = cca.build_from_data(x, x[:, :2], 0.0, 1e-6, 1)
        np.testing.assert_allclose(problem.sigma_xx, np.eye(4), atol=1e-14)

    def test_cross_covariance_transpose(self):
        rng = np.random.default_rng(1)
        x, y = rng.random((10, 4)), rng.random((10, 3))
        problem = cca.build_from_data(x, y, 1e-6, 1e-6, 1)
        np.testing.assert_allclose(problem.sigma_xy.T, y.T @ x, atol=1e-14)

    def test_hand_instance(self):
        x = np.array([[1.0, 2.0], [0.0, 1.0], [1.0, -1.0]])
        y = np.array([[1.0], [1.0], [2.0]])
        problem = cca.build_from_data(x, y, 0.5, 0.25, 1)
        np.testing.assert_allclose(
            problem.sigma_xx,
            np.array([[1 + 0 + 1 + 0.5, 2 + 0 - 1],
                      [2 + 0 - 1, 4 + 1 + 1 + 0.5]]))
        np.testing.assert_allclose(problem.sigma_xy,
                                   np.array([[1 + 0 + 2], [2 + 1 - 2]]))

    def test_singular_gram_rejected(self):
        x = np.zeros((3, 2))
        with pytest.raises(ValueError, match="singular"):
            cca.build_from_data(x, np.ones((3, 1)), 0.0, 1e-6, 1)


class TestCostAndPartials:
    def test_rank_one_cost(self):
        # U, V aligned with the top singular pair and N = (1) give -sigma_1
        problem = small_problem(m=1)
        sol = cca.closed_form_solution(problem)
        one = cca.CcaProblem(problem.sigma_xx, problem.sigma_yy,
                             problem.sigma_xy, np.array([1.0]))
        assert cca.cost(one, sol.U, sol.V) == pytest.approx(
            -sol.correlations[0], rel=1e-10)

    def test_cost_at_solution(self):
        problem = small_problem(m=3)
        sol = cca.closed_form_solution(problem)
        expected = -float(np.sum(problem.weights * sol.correlations))
        assert cca.cost(problem, sol.U, sol.V) == pytest.approx(expected,
                                                               rel=1e-10)

    def test_cost_matches_direct_trace(self):
        problem = small_problem()
        u, v = random_feasible(problem, 2)
        direct = -np.trace(u.T @ problem.sigma_xy @ v
                           @ np.diag(problem.weights))
        assert cca.cost(problem, u, v) == pytest.approx(direct)

    def test_zero_coupling_gives_zero_partials(self):
        problem = small_problem()
        zero = cca.CcaProblem(problem.sigma_xx, problem.sigma_yy,
                              np.zeros_like(problem.sigma_xy),
                              problem.weights)
        u, v = random_feasible(problem, 3)
        du, dv = cca.euclidean_partials(zero, u, v)
        assert np.linalg.norm(du) == 0 and np.linalg.norm(dv) == 0

    def test_partials_match_finite_differences(self):
        problem = small_problem(seed=4)
        u, v = random_feasible(problem, 5)
        du, dv = cca.euclidean_partials(problem, u, v)
        rng = np.random.default_rng(6)
        h = 1e-6
        for _ in range(10):
            eu = rng.standard_normal(u.shape)
            ev = rng.standard_normal(v.shape)
            fd = (cca.cost(problem, u + h * eu, v + h * ev)
                  - cca.cost(problem, u - h * eu, v - h * ev)) / (2 * h)
            analytic = float(np.sum(du * eu) + np.sum(dv * ev))
            assert fd == pytest.approx(analytic, rel=1e-6, abs=1e-9)

    def test_single_column_partial(self):
        problem = small_problem(m=1)
        u, v = random_feasible(problem, 7)
        du, _ = cca.euclidean_partials(problem, u, v)
        np.testing.assert_allclose(du, -problem.sigma_xy @ v
                                   * problem.weights[0], atol=1e-12)


class TestMetricFactors:
    def test_euclidean_tag_identities(self):
        problem = small_problem("E")
        u, v = random_feasible(problem, 8)
        factors = cca.metric_factors(problem, u, v)
        assert factors.left == [None, None]
        assert factors.right == [None, None]

    def test_lr12_diagonal_at_solution(self):
        problem = small_problem("LR12", m=2)
        sol = cca.closed_form_solution(problem)
        factors = cca.metric_factors(problem, sol.U, sol.V)
        target = np.diag(np.sqrt(
            sol.correlations ** 2 * problem.weights ** 2 + problem.delta))
        for r in factors.right:
            np.testing.assert_allclose(r, target, atol=1e-9)

    def test_factors_spd_at_random_points(self):
        problem = small_problem("LR12")
        for seed in range(5):
            u, v = random_feasible(problem, 10 + seed)
            factors = cca.metric_factors(problem, u, v)
            for r in factors.right:
                linalg.chol(r)  # raises unless SPD


class TestRiemannianGradient:
    @pytest.mark.parametrize("tag", cca.METRIC_TAGS)
    def test_zero_at_solution(self, tag):
        problem = small_problem(tag, m=3)
        sol = cca.closed_form_solution(problem)
        factors = cca.metric_factors(problem, sol.U, sol.V)
        grad = cca.riemannian_gradient(problem, sol.U, sol.V, factors)
        assert geometry.metric_norm([sol.U, sol.V], factors, grad) < 1e-8

    @pytest.mark.parametrize("tag", ["L12", "LR12"])
    def test_matches_generic_path(self, tag):
        problem = small_problem(tag, seed=11)
        kinds = [GeneralizedStiefel(9, 2, problem.sigma_xx),
                 GeneralizedStiefel(7, 2, problem.sigma_yy)]
        for seed in range(5):
            u, v = random_feasible(problem, 20 + seed)
            factors = cca.metric_factors(problem, u, v)
            closed = cca.riemannian_gradient(problem, u, v, factors)
            generic = geometry.egrad_to_rgrad(
                [u, v], kinds, factors,
                list(cca.euclidean_partials(problem, u, v)))
            for a, b in zip(closed, generic):
                assert np.linalg.norm(a - b) < 1e-10 * max(
                    np.linalg.norm(b), 1.0)

    def test_lyapunov_multiplier_at_solution(self):
        # the projection multipliers collapse to -Sigma N at the minimizer
        problem = small_problem("LR12", m=3)
        sol = cca.closed_form_solution(problem)
        factors = cca.metric_factors(problem, sol.U, sol.V)
        m12 = factors.right[0]
        n_mat = problem.n_mat
        bar_u = -np.linalg.solve(
            m12, problem.solve_xx(problem.sigma_xy @ sol.V @ n_mat).T).T
        s1 = linalg.lyap_solve(m12, 2.0 * linalg.sym(
            sol.U.T @ problem.sigma_xx @ bar_u))
        np.testing.assert_allclose(
            s1, -np.diag(sol.correlations) @ n_mat, atol=1e-8)

    @pytest.mark.parametrize("tag", cca.METRIC_TAGS)
    def test_gradient_defining_property(self, tag):
        problem = small_problem(tag, seed=12)
        mp = cca.make_manifold_problem(problem)
        rng = np.random.default_rng(13)
        for _ in range(4):
            x = geometry.random_point(mp.kinds, rng)
            factors = mp.metric_factors(x)
            grad = mp.grad(x, factors)
            partials = mp.partials(x)
            for _ in range(5):
                zeta = geometry.random_tangent(x, mp.kinds, factors, rng,
                                               project=mp.proj)
                lhs = geometry.metric_inner(x, factors, grad, zeta)
                rhs = sum(np.sum(p * z) for p, z in zip(partials, zeta))
                assert abs(lhs - rhs) < 1e-9 * max(abs(rhs), 1.0)

    @pytest.mark.parametrize("tag", cca.METRIC_TAGS)
    def test_projection_is_metric_orthogonal(self, tag):
        problem = small_problem(tag, seed=14)
        mp = cca.make_manifold_problem(problem)
        rng = np.random.default_rng(15)
        x = geometry.random_point(mp.kinds, rng)
        factors = mp.metric_factors(x)
        bar = [rng.standard_normal(b.shape) for b in x]
        eta = mp.proj(x, factors, bar)
        assert geometry.tangency_residual(mp.kinds, x, eta) < 1e-9
        resid = geometry.block_combine((1.0, bar), (-1.0, eta))
        for _ in range(10):
            zeta = geometry.random_tangent(x, mp.kinds, factors, rng,
                                           project=mp.proj)
            inner = geometry.metric_inner(x, factors, resid, zeta)
            assert abs(inner) < 1e-9 * max(
                geometry.metric_norm(x, factors, zeta), 1.0)


class TestClosedFormSolution:
    def test_diagonal_coupling_gives_axes(self):
        sxy = np.zeros((4, 3))
        np.fill_diagonal(sxy, [0.9, 0.5, 0.2])
        problem = cca.CcaProblem(np.eye(4), np.eye(3), sxy,
                                 np.array([2.0, 1.0]))
        sol = cca.closed_form_solution(problem)
        np.testing.assert_allclose(sol.U, np.eye(4)[:, :2], atol=1e-12)
        np.testing.assert_allclose(sol.V, np.eye(3)[:, :2], atol=1e-12)
        np.testing.assert_allclose(sol.correlations, [0.9, 0.5])

    def test_feasibility_and_criticality(self):
        problem = small_problem(m=3, seed=16)
        sol = cca.closed_form_solution(problem)
        np.testing.assert_allclose(sol.U.T @ problem.sigma_xx @ sol.U,
                                   np.eye(3), atol=1e-10)
        np.testing.assert_allclose(sol.V.T @ problem.sigma_yy @ sol.V,
                                   np.eye(3), atol=1e-10)
        factors = cca.metric_factors(problem, sol.U, sol.V)
        grad = cca.riemannian_gradient(problem, sol.U, sol.V, factors)
        assert geometry.metric_norm([sol.U, sol.V], factors, grad) < 1e-8

    def test_sign_convention_deterministic(self):
        problem = small_problem(m=2, seed=17)
        sol1 = cca.closed_form_solution(problem)
        sol2 = cca.closed_form_solution(problem)
        np.testing.assert_array_equal(sol1.U, sol2.U)
        wx = linalg.spd_inv_sqrt(problem.sigma_xx)
        u_bar = np.linalg.solve(wx, sol1.U)  # recover whitened columns
        for col in u_bar.T:
            first = col[np.abs(col) > 1e-12 * np.max(np.abs(col))][0]
            assert first > 0

    def test_gap_required(self):
        sxy = np.zeros((3, 3))
        np.fill_diagonal(sxy, [0.9, 0.5, 0.5])
        problem = cca.CcaProblem(np.eye(3), np.eye(3), sxy,
                                 np.array([2.0, 1.0]))
        with pytest.raises(ValueError, match="non-isolated minimizer"):
            cca.closed_form_solution(problem)

    def test_optimality_against_random_points(self):
        problem = small_problem(m=2, seed=18)
        sol = cca.closed_form_solution(problem)
        best = cca.cost(problem, sol.U, sol.V)
        for seed in range(100):
            u, v = random_feasible(problem, 100 + seed)
            assert best <= cca.cost(problem, u, v) + 1e-12


class TestSubspaceDistance:
    def test_zero_on_equal(self):
        u = np.linalg.qr(np.random.default_rng(19).standard_normal((5, 2)))[0]
        assert cca.subspace_distance(u, u) == 0.0

    def test_orthogonal_unit_vectors(self):
        e1 = np.eye(3)[:, :1]
        e2 = np.eye(3)[:, 1:2]
        assert cca.subspace_distance(e1, e2) == pytest.approx(np.sqrt(2.0))

    def test_symmetry(self):
        rng = np.random.default_rng(20)
        u = np.linalg.qr(rng.standard_normal((6, 2)))[0]
        v = np.linalg.qr(rng.standard_normal((6, 2)))[0]
        assert cca.subspace_distance(u, v) == pytest.approx(
            cca.subspace_distance(v, u))


class TestRetractionConsistency:
    def test_cholesky_form_equals_whitened_qf(self):
        problem = small_problem(seed=21)
        mp = cca.make_manifold_problem(problem)
        rng = np.random.default_rng(22)
        x = geometry.random_point(mp.kinds, rng)
        factors = mp.metric_factors(x)
        eta = geometry.random_tangent(x, mp.kinds, factors, rng,
                                      project=mp.proj)
        fast = geometry.retract(x, mp.kinds, eta, 0.8)
        for blk, e, sigma, out in zip(
                x, eta, (problem.sigma_xx, problem.sigma_yy), fast):
            root = linalg.spd_sqrt(sigma)
            whitened = linalg.spd_inv_sqrt(sigma) \
                @ linalg.qf(root @ (blk + 0.8 * e))
            assert np.linalg.norm(out - whitened) < 1e-10


class TestSolverIntegration:
    @pytest.mark.parametrize("tag", ["E", "L12", "LR12"])
    def test_rgd_monotone_and_feasible(self, tag):
        problem = small_problem(tag, seed=23, dx=8, dy=6, m=2, n=30)
        sol = cca.closed_form_solution(problem)
        mp = cca.make_manifold_problem(problem, sol)
        x0 = geometry.random_point(mp.kinds, np.random.default_rng(24))
        report = solvers.rgd(
            mp, x0, solvers.LineSearchParams(),
            solvers.StoppingCriteria(gnorm_tol=1e-9, max_iters=500))
        costs = report.column("cost")
        assert np.all(np.diff(costs) <= 1e-12)
        assert geometry.feasibility_residual(mp.kinds,
                                             report.final_point) < 1e-8

    def test_feasibility_along_long_run(self):
        problem = small_problem("LR12", seed=25, dx=8, dy=6, m=2, n=30)
        mp = cca.make_manifold_problem(problem)
        x0 = geometry.random_point(mp.kinds, np.random.default_rng(26))

        worst = 0.0
        original_cost = mp.cost

        def spying_cost(x):
            nonlocal worst
            worst = max(worst, geometry.feasibility_residual(mp.kinds, x))
            return original_cost(x)

        mp.cost = spying_cost
        solvers.rgd(mp, x0, solvers.LineSearchParams(),
                    solvers.StoppingCriteria(gnorm_tol=0.0, max_iters=500))
        assert worst < 1e-8
