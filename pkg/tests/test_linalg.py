import numpy as np
import pytest

from prodopt import linalg


def rng_for(seed):
    return np.random.default_rng(seed)


class TestQf:
    def test_identity(self):
        np.testing.assert_allclose(linalg.qf(np.eye(3)), np.eye(3), atol=1e-15)

    def test_single_column_normalization(self):
        q = linalg.qf(np.array([[3.0], [4.0]]))
        np.testing.assert_allclose(q, [[0.6], [0.8]], atol=1e-15)

    def test_reconstruction(self):
        a = rng_for(0).standard_normal((6, 3))
        q = linalg.qf(a)
        r = q.T @ a
        assert np.linalg.norm(q @ r - a) < 1e-12
        np.testing.assert_allclose(q.T @ q, np.eye(3), atol=1e-13)

    def test_positive_diagonal_convention(self):
        a = rng_for(1).standard_normal((5, 4))
        q = linalg.qf(a)
        r = q.T @ a
        assert np.all(np.diag(r) > 0)

    def test_idempotence(self):
        for seed in range(10):
            a = rng_for(seed).standard_normal((7, 3))
            q = linalg.qf(a)
            assert np.linalg.norm(linalg.qf(q) - q) < 1e-12

    def test_rank_deficient_rejected(self):
        a = np.ones((4, 2))
        with pytest.raises(ValueError, match="rank deficient in qf"):
            linalg.qf(a)


class TestChol:
    def test_identity(self):
        np.testing.assert_allclose(linalg.chol(np.eye(2)), np.eye(2))

    def test_diagonal(self):
        np.testing.assert_allclose(linalg.chol(np.diag([4.0, 9.0])),
                                   np.diag([2.0, 3.0]))

    def test_reconstruction(self):
        g = rng_for(2).standard_normal((5, 5))
        s = g.T @ g + np.eye(5)
        r = linalg.chol(s)
        assert np.linalg.norm(r.T @ r - s) / np.linalg.norm(s) < 1e-12
        assert np.all(np.diag(r) > 0)
        assert np.allclose(r, np.triu(r))

    def test_not_positive_definite(self):
        with pytest.raises(ValueError, match="matrix not positive definite"):
            linalg.chol(np.diag([1.0, -1.0]))


class TestSymEig:
    def test_identity(self):
        w, q = linalg.sym_eig(np.eye(2))
        np.testing.assert_allclose(w, [1.0, 1.0])
        np.testing.assert_allclose(q @ q.T, np.eye(2), atol=1e-14)

    def test_diagonal_with_negative(self):
        w, q = linalg.sym_eig(np.diag([-1.0, 5.0]))
        np.testing.assert_allclose(w, [-1.0, 5.0])
        np.testing.assert_allclose(np.abs(q), np.eye(2), atol=1e-14)

    def test_reconstruction(self):
        s = rng_for(3).standard_normal((6, 6))
        s = s + s.T
        w, q = linalg.sym_eig(s)
        resid = q @ np.diag(w) @ q.T - s
        assert np.linalg.norm(resid) / np.linalg.norm(s) < 1e-10
        assert np.all(np.diff(w) >= 0)

    def test_asymmetric_rejected(self):
        s = np.array([[1.0, 2.0], [0.0, 1.0]])
        with pytest.raises(ValueError, match="not symmetric"):
            linalg.sym_eig(s)


class TestPrecondFactor:
    def test_identity_delta_zero(self):
        np.testing.assert_allclose(linalg.precond_factor(np.eye(4), 0.0),
                                   np.eye(4), atol=1e-14)

    def test_absolute_eigenvalues(self):
        out = linalg.precond_factor(np.diag([2.0, -3.0]), 0.0)
        np.testing.assert_allclose(out, np.diag([2.0, 3.0]), atol=1e-14)

    def test_squaring_oracle(self):
        m = rng_for(4).standard_normal((5, 5))
        delta = 1e-6
        p = linalg.precond_factor(m, delta)
        target = linalg.sym(m) @ linalg.sym(m) + delta * np.eye(5)
        assert np.linalg.norm(p @ p - target) < 1e-9
        linalg.chol(p)  # SPD

    def test_eigenvalue_map(self):
        # output eigenvalues are sqrt(lam_i^2 + delta) of sym(M)'s lam_i
        m = rng_for(5).standard_normal((4, 4))
        delta = 0.37
        lam = np.linalg.eigvalsh(linalg.sym(m))
        w, _ = linalg.sym_eig(linalg.precond_factor(m, delta))
        np.testing.assert_allclose(np.sort(w),
                                   np.sort(np.sqrt(lam**2 + delta)),
                                   rtol=1e-12)


def kron_lyap_oracle(m, c):
    """Dense solve of M^{-1} S + S M^{-1} = C via the vectorized system."""
    n = m.shape[0]
    minv = np.linalg.inv(m)
    # column-major vec: vec(A S) = (I kron A) vec(S), vec(S B) = (B^T kron I) vec(S)
    system = np.kron(np.eye(n), minv) + np.kron(minv.T, np.eye(n))
    return np.linalg.solve(system, c.reshape(-1, order="F")).reshape(
        (n, n), order="F")


class TestLyapSolve:
    def test_identity_gives_half(self):
        c = linalg.sym(rng_for(6).standard_normal((3, 3)))
        s = linalg.lyap_solve(np.eye(3), c)
        np.testing.assert_allclose(s, c / 2, atol=1e-12)

    def test_diagonal_formula_and_kron_oracle(self):
        m = np.diag([2.0, 5.0])
        c = np.array([[1.0, 0.3], [0.3, -2.0]])
        s = linalg.lyap_solve(m, c)
        expected = np.empty((2, 2))
        d = np.array([2.0, 5.0])
        for i in range(2):
            for j in range(2):
                expected[i, j] = c[i, j] / (1 / d[i] + 1 / d[j])
        np.testing.assert_allclose(s, expected, rtol=1e-12)
        np.testing.assert_allclose(s, kron_lyap_oracle(m, c), rtol=1e-12)

    def test_random_against_kron_oracle(self):
        rng = rng_for(7)
        for _ in range(10):
            g = rng.standard_normal((4, 4))
            m = g @ g.T + np.eye(4)
            c = linalg.sym(rng.standard_normal((4, 4)))
            s = linalg.lyap_solve(m, c)
            np.testing.assert_allclose(s, kron_lyap_oracle(m, c),
                                       rtol=1e-10, atol=1e-12)
            minv = np.linalg.inv(m)
            resid = minv @ s + s @ minv - c
            assert np.linalg.norm(resid) / max(np.linalg.norm(c), 1) < 1e-10

    def test_zero_rhs(self):
        m = np.diag([1.0, 3.0])
        np.testing.assert_allclose(linalg.lyap_solve(m, np.zeros((2, 2))),
                                   np.zeros((2, 2)))

    def test_linearity_in_c(self):
        rng = rng_for(8)
        g = rng.standard_normal((3, 3))
        m = g @ g.T + np.eye(3)
        c1 = linalg.sym(rng.standard_normal((3, 3)))
        c2 = linalg.sym(rng.standard_normal((3, 3)))
        alpha = 0.7
        lhs = linalg.lyap_solve(m, alpha * c1 + c2)
        rhs = alpha * linalg.lyap_solve(m, c1) + linalg.lyap_solve(m, c2)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_non_spd_rejected(self):
        with pytest.raises(ValueError, match="not positive definite"):
            linalg.lyap_solve(np.diag([1.0, -2.0]), np.eye(2))


class TestLyapSolveSpd:
    def test_against_kron_oracle(self):
        rng = rng_for(9)
        g = rng.standard_normal((4, 4))
        a = g @ g.T + np.eye(4)
        c = linalg.sym(rng.standard_normal((4, 4)))
        s = linalg.lyap_solve_spd(a, c)
        # A S + S A = C  <=>  M^{-1} S + S M^{-1} = C with M = A^{-1}
        np.testing.assert_allclose(s, kron_lyap_oracle(np.linalg.inv(a), c),
                                   rtol=1e-9, atol=1e-12)
        assert np.linalg.norm(a @ s + s @ a - c) < 1e-10


class TestSvdThin:
    def test_identity(self):
        _, s, _ = linalg.svd_thin(np.eye(3))
        np.testing.assert_allclose(s, [1.0, 1.0, 1.0])

    def test_diagonal_with_zero(self):
        _, s, _ = linalg.svd_thin(np.diag([3.0, 0.0]))
        np.testing.assert_allclose(s, [3.0, 0.0])

    def test_reconstruction(self):
        a = rng_for(10).standard_normal((6, 4))
        u, s, v = linalg.svd_thin(a)
        resid = u @ np.diag(s) @ v.T - a
        assert np.linalg.norm(resid) / np.linalg.norm(a) < 1e-10
        np.testing.assert_allclose(u.T @ u, np.eye(4), atol=1e-13)
        np.testing.assert_allclose(v.T @ v, np.eye(4), atol=1e-13)
        assert np.all(np.diff(s) <= 0) and np.all(s >= 0)


class TestSolveSpd:
    def test_identity(self):
        b = rng_for(11).standard_normal((3, 2))
        np.testing.assert_allclose(linalg.solve_spd(np.eye(3), b), b)

    def test_diagonal(self):
        x = linalg.solve_spd(np.diag([2.0, 4.0]), np.array([[1.0], [1.0]]))
        np.testing.assert_allclose(x, [[0.5], [0.25]])

    def test_residual(self):
        rng = rng_for(12)
        g = rng.standard_normal((5, 5))
        s = g @ g.T + np.eye(5)
        b = rng.standard_normal((5, 3))
        x = linalg.solve_spd(s, b)
        assert np.linalg.norm(s @ x - b) / np.linalg.norm(b) < 1e-12

    def test_non_spd_rejected(self):
        with pytest.raises(ValueError, match="not positive definite"):
            linalg.solve_spd(np.diag([1.0, -1.0]), np.ones((2, 1)))


class TestSpdRoots:
    def test_sqrt_squares_back(self):
        g = rng_for(13).standard_normal((4, 4))
        s = g @ g.T + np.eye(4)
        r = linalg.spd_sqrt(s)
        np.testing.assert_allclose(r @ r, s, rtol=1e-11)

    def test_inv_sqrt(self):
        g = rng_for(14).standard_normal((4, 4))
        s = g @ g.T + np.eye(4)
        w = linalg.spd_inv_sqrt(s)
        np.testing.assert_allclose(w @ s @ w, np.eye(4), atol=1e-11)

    def test_floor_rejects_near_singular(self):
        with pytest.raises(ValueError):
            linalg.spd_inv_sqrt(np.diag([1.0, 1e-16]))
