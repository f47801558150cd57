"""Canonical correlation analysis on a product of generalized Stiefel manifolds.

Maximizes the weighted trace of the cross-covariance between projected
data sets: minimize -tr(U^T Sxy V N) subject to U^T Sxx U = V^T Syy V = I.
Five metric choices are supported via the tag field (E, L1, L2, L12,
LR12); the scaled metrics reuse the constraint matrices as left factors
and, for LR12, the delta-regularized coupling factors on the right.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from . import geometry, linalg
from .geometry import GeneralizedStiefel, ManifoldProblem, MetricFactors
from .spectrum import SpectrumInputs

__all__ = [
    "METRIC_TAGS",
    "CcaProblem",
    "CcaSolution",
    "build_from_data",
    "cost",
    "euclidean_partials",
    "metric_factors",
    "metric_projection",
    "riemannian_gradient",
    "closed_form_solution",
    "subspace_distance",
    "spectrum_inputs",
    "make_manifold_problem",
]

METRIC_TAGS = ("E", "L1", "L2", "L12", "LR12")


@dataclass(frozen=True)
class CcaProblem:
    """Immutable problem data; share freely across concurrent solver runs."""

    sigma_xx: np.ndarray
    sigma_yy: np.ndarray
    sigma_xy: np.ndarray
    weights: np.ndarray          # diagonal of N, strictly decreasing positive
    delta: float = 1e-15
    metric_tag: str = "LR12"

    def __post_init__(self):
        for name in ("sigma_xx", "sigma_yy", "sigma_xy", "weights"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=float))
        if self.metric_tag not in METRIC_TAGS:
            raise ValueError(f"metric_tag must be one of {METRIC_TAGS}")
        w = self.weights
        if np.any(w <= 0) or np.any(np.diff(w) >= 0):
            raise ValueError("weights must be strictly decreasing and positive")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    @property
    def m(self) -> int:
        return int(self.weights.size)

    @property
    def n_mat(self) -> np.ndarray:
        return np.diag(self.weights)

    @cached_property
    def _cho_xx(self):
        return scipy.linalg.cho_factor(self.sigma_xx, lower=True)

    @cached_property
    def _cho_yy(self):
        return scipy.linalg.cho_factor(self.sigma_yy, lower=True)

    def solve_xx(self, b: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self._cho_xx, b)

    def solve_yy(self, b: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self._cho_yy, b)

    @cached_property
    def _whitening(self):
        """(Sxx^{-1/2}, Syy^{-1/2}) with an eigenvalue floor at 1e-14."""
        return (linalg.spd_inv_sqrt(self.sigma_xx),
                linalg.spd_inv_sqrt(self.sigma_yy))


@dataclass(frozen=True)
class CcaSolution:
    U: np.ndarray
    V: np.ndarray
    correlations: np.ndarray


def build_from_data(x: np.ndarray, y: np.ndarray, lam_x: float, lam_y: float,
                    m: int, weights: np.ndarray | None = None,
                    delta: float = 1e-15,
                    metric_tag: str = "LR12") -> CcaProblem:
    """Problem from raw data: Sxx = X^T X + lam_x I, Syy = Y^T Y + lam_y I,
    Sxy = X^T Y.  Raises if a regularized Gram matrix is not PD."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] != y.shape[0]:
        raise ValueError("X and Y must have the same number of rows")
    if lam_x < 0 or lam_y < 0:
        raise ValueError("regularizers must be nonnegative")
    sxx = x.T @ x + lam_x * np.eye(x.shape[1])
    syy = y.T @ y + lam_y * np.eye(y.shape[1])
    for s, name in ((sxx, "Sxx"), (syy, "Syy")):
        try:
            linalg.chol(s)
        except ValueError as exc:
            raise ValueError(f"{name} is singular; increase the regularizer") \
                from exc
    if weights is None:
        weights = np.arange(m, 0, -1, dtype=float)
    return CcaProblem(sxx, syy, x.T @ y, np.asarray(weights, dtype=float),
                      delta, metric_tag)


def cost(problem: CcaProblem, u: np.ndarray, v: np.ndarray) -> float:
    """f(U, V) = -tr(U^T Sxy V N)."""
    return -float(np.trace(u.T @ problem.sigma_xy @ v @ problem.n_mat))


def euclidean_partials(problem: CcaProblem, u: np.ndarray, v: np.ndarray
                       ) -> tuple[np.ndarray, np.ndarray]:
    """(d_U f, d_V f) = (-Sxy V N, -Sxy^T U N)."""
    n = problem.n_mat
    return (-problem.sigma_xy @ v @ n, -problem.sigma_xy.T @ u @ n)


def metric_factors(problem: CcaProblem, u: np.ndarray, v: np.ndarray
                   ) -> MetricFactors:
    """Per-block (L, R) pairs for the active metric tag.

    LR12 right factors are (sym(U^T Sxy V N)^2 + delta I)^{1/2} and the
    transposed counterpart; they are diagonal at the minimizer.
    """
    tag = problem.metric_tag
    left: list[np.ndarray | None] = [None, None]
    right: list[np.ndarray | None] = [None, None]
    if tag in ("L1", "L12", "LR12"):
        left[0] = problem.sigma_xx
    if tag in ("L2", "L12", "LR12"):
        left[1] = problem.sigma_yy
    if tag == "LR12":
        n = problem.n_mat
        coupling = u.T @ problem.sigma_xy @ v @ n
        right[0] = linalg.precond_factor(coupling, problem.delta)
        right[1] = linalg.precond_factor(v.T @ problem.sigma_xy.T @ u @ n,
                                         problem.delta)
    return MetricFactors(left, right)


def _project_block(constraint: np.ndarray, blk: np.ndarray,
                   left: np.ndarray | None, right: np.ndarray | None,
                   solve_left, bar: np.ndarray) -> np.ndarray:
    """Metric-orthogonal tangent projection for one generalized Stiefel block.

    The normal space under g is {L^{-1} Sigma X S R^{-1} : S symmetric};
    enforcing tangency of the remainder gives
    (G S R^{-1} + R^{-1} S G)/2 = sym(X^T Sigma bar) with the Gram matrix
    G = X^T Sigma L^{-1} Sigma X.  With L = Sigma this is the Lyapunov
    closed form in R; with R = I it is the Lyapunov equation in G.  The
    metrics used here always fall in one of those two cases.
    """
    c = linalg.sym(blk.T @ constraint @ bar)
    if left is None:
        left_matches = bool(np.allclose(constraint,
                                        np.eye(constraint.shape[0])))
    else:
        left_matches = left is constraint or (
            left.shape == constraint.shape
            and np.array_equal(left, constraint))
    if left_matches:
        if right is None:
            return bar - blk @ c
        s = linalg.lyap_solve(right, 2.0 * c)
        return bar - blk @ np.linalg.solve(right, s.T).T
    if right is not None:
        raise ValueError("two-sided mismatch has no closed-form projection")
    sigma_blk = constraint @ blk
    scaled = sigma_blk if left is None else solve_left(sigma_blk)
    gram = sigma_blk.T @ scaled
    s = linalg.lyap_solve_spd(gram, 2.0 * c)
    return bar - scaled @ s


def metric_projection(problem: CcaProblem, u: np.ndarray, v: np.ndarray,
                      factors: MetricFactors,
                      ambient: list[np.ndarray]) -> list[np.ndarray]:
    """g-orthogonal projection onto the product tangent space, all tags."""
    return [
        _project_block(problem.sigma_xx, u, factors.left[0],
                       factors.right[0], problem.solve_xx, ambient[0]),
        _project_block(problem.sigma_yy, v, factors.left[1],
                       factors.right[1], problem.solve_yy, ambient[1]),
    ]


def riemannian_gradient(problem: CcaProblem, u: np.ndarray, v: np.ndarray,
                        factors: MetricFactors | None = None
                        ) -> list[np.ndarray]:
    """Gradient under the active metric.

    L12 and LR12 use their closed forms (the latter via the Lyapunov
    multipliers of the projection); the remaining tags scale the partials
    by the metric operator and apply the metric-orthogonal projection.
    """
    if factors is None:
        factors = metric_factors(problem, u, v)
    n = problem.n_mat
    tag = problem.metric_tag
    if tag == "L12":
        cu = problem.sigma_xy @ v @ n
        cv = problem.sigma_xy.T @ u @ n
        return [-problem.solve_xx(cu) + u @ linalg.sym(u.T @ cu),
                -problem.solve_yy(cv) + v @ linalg.sym(v.T @ cv)]
    if tag == "LR12":
        m12, m22 = factors.right
        bar_u = -np.linalg.solve(m12, problem.solve_xx(
            problem.sigma_xy @ v @ n).T).T
        bar_v = -np.linalg.solve(m22, problem.solve_yy(
            problem.sigma_xy.T @ u @ n).T).T
        s1 = linalg.lyap_solve(m12, 2.0 * linalg.sym(
            u.T @ problem.sigma_xx @ bar_u))
        s2 = linalg.lyap_solve(m22, 2.0 * linalg.sym(
            v.T @ problem.sigma_yy @ bar_v))
        return [bar_u - u @ np.linalg.solve(m12, s1.T).T,
                bar_v - v @ np.linalg.solve(m22, s2.T).T]
    du, dv = euclidean_partials(problem, u, v)
    scaled = [problem.solve_xx(du) if factors.left[0] is not None else du,
              problem.solve_yy(dv) if factors.left[1] is not None else dv]
    return metric_projection(problem, u, v, factors, scaled)


def _fix_signs(u_bar: np.ndarray, v_bar: np.ndarray
               ) -> tuple[np.ndarray, np.ndarray]:
    """Make the first nonzero entry of each left column positive; the right
    columns flip along so the product is unchanged."""
    u_bar = u_bar.copy()
    v_bar = v_bar.copy()
    for i in range(u_bar.shape[1]):
        col = u_bar[:, i]
        nz = np.nonzero(np.abs(col) > 1e-12 * np.max(np.abs(col)))[0]
        if nz.size and col[nz[0]] < 0:
            u_bar[:, i] = -col
            v_bar[:, i] = -v_bar[:, i]
    return u_bar, v_bar


def closed_form_solution(problem: CcaProblem) -> CcaSolution:
    """Minimizer from the thin SVD of the whitened coupling matrix.

    U* = Sxx^{-1/2} Ubar, V* = Syy^{-1/2} Vbar where (Ubar, Vbar) hold the
    m leading singular vectors of Sxx^{-1/2} Sxy Syy^{-1/2}.  Requires a
    spectral gap at position m.
    """
    m = problem.m
    wx, wy = problem._whitening
    u_bar, sigma, v_bar = linalg.svd_thin(wx @ problem.sigma_xy @ wy)
    if sigma.size < m + 1 or sigma[m - 1] - sigma[m] <= 1e-10 * sigma[0]:
        raise ValueError("non-isolated minimizer")
    u_bar, v_bar = _fix_signs(u_bar[:, :m], v_bar[:, :m])
    return CcaSolution(wx @ u_bar, wy @ v_bar, sigma[:m].copy())


def subspace_distance(u: np.ndarray, u_ref: np.ndarray) -> float:
    """D(U, Uref) = ||U U^T - Uref Uref^T||_F on the raw matrices."""
    if u.shape != u_ref.shape:
        raise ValueError("shape mismatch in subspace_distance")
    return float(np.linalg.norm(u @ u.T - u_ref @ u_ref.T))


def whitened_singular_values(problem: CcaProblem) -> np.ndarray:
    wx, wy = problem._whitening
    return linalg.svd_thin(wx @ problem.sigma_xy @ wy)[1]


def spectrum_inputs(problem: CcaProblem) -> SpectrumInputs:
    """Spectral data (sigma, mu, delta) for the condition-number formulas."""
    return SpectrumInputs(whitened_singular_values(problem),
                          problem.weights, problem.delta)


def build_known_spectrum(dx: int, dy: int, m: int,
                         sigma: np.ndarray | None = None,
                         weights: np.ndarray | None = None,
                         delta: float = 1e-15, metric_tag: str = "LR12",
                         seed: int = 0) -> CcaProblem:
    """Instance whose whitened coupling matrix has a prescribed spectrum.

    Sxx and Syy are random well-conditioned SPD matrices; Sxy is assembled
    as Sxx^{1/2} (Ubar diag(sigma) Vbar^T) Syy^{1/2} with random
    orthonormal factors, so the whitened singular values equal sigma
    exactly.  Used to cross-validate the condition-number formulas against
    the numerical spectrum.
    """
    rng = np.random.default_rng(seed)
    q = min(dx, dy)
    if sigma is None:
        sigma = 0.95 * (0.8 ** np.arange(q))
    sigma = np.asarray(sigma, dtype=float)
    if sigma.size != q:
        raise ValueError(f"sigma must have length min(dx, dy) = {q}")
    if weights is None:
        weights = np.arange(m, 0, -1, dtype=float)

    def random_spd(n: int) -> np.ndarray:
        g = rng.standard_normal((n, n))
        return g @ g.T / n + np.eye(n)

    sxx = random_spd(dx)
    syy = random_spd(dy)
    u_bar = linalg.qf(rng.standard_normal((dx, q)))
    v_bar = linalg.qf(rng.standard_normal((dy, q)))
    sxy = linalg.spd_sqrt(sxx) @ (u_bar * sigma) @ v_bar.T \
        @ linalg.spd_sqrt(syy)
    return CcaProblem(sxx, syy, sxy, np.asarray(weights, dtype=float),
                      delta, metric_tag)


def make_manifold_problem(problem: CcaProblem,
                          reference: CcaSolution | None = None
                          ) -> ManifoldProblem:
    """Solver-facing bundle; reference adds subspace-distance trace columns."""
    dx, dy = problem.sigma_xx.shape[0], problem.sigma_yy.shape[0]
    kinds = [GeneralizedStiefel(dx, problem.m, problem.sigma_xx),
             GeneralizedStiefel(dy, problem.m, problem.sigma_yy)]

    extra = None
    if reference is not None:
        def extra(x):
            return {"dist_u": subspace_distance(x[0], reference.U),
                    "dist_v": subspace_distance(x[1], reference.V)}

    return ManifoldProblem(
        kinds=kinds,
        cost=lambda x: cost(problem, x[0], x[1]),
        partials=lambda x: list(euclidean_partials(problem, x[0], x[1])),
        metric_factors=lambda x: metric_factors(problem, x[0], x[1]),
        gradient=lambda x, f: riemannian_gradient(problem, x[0], x[1], f),
        project=lambda x, f, a: metric_projection(problem, x[0], x[1], f, a),
        extra_metrics=extra,
    )
