"""Truncated SVD as block optimization on a product of Stiefel manifolds.

Minimize -tr(U^T A V N) over St(p, m) x St(p, n).  The 'E' tag is the
Euclidean metric; 'R12' scales each block on the right by the
delta-regularized coupling factor, which provably shrinks the Hessian
condition number at the minimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry, linalg
from .cca import subspace_distance
from .geometry import ManifoldProblem, MetricFactors, Stiefel
from .spectrum import SpectrumInputs

__all__ = [
    "SvdProblem",
    "SvdBenchmarkSpec",
    "cost",
    "euclidean_partials",
    "metric_factors",
    "riemannian_gradient",
    "build_benchmark",
    "benchmark_spectrum_inputs",
    "make_manifold_problem",
]

METRIC_TAGS = ("E", "R12")


@dataclass(frozen=True)
class SvdProblem:
    a: np.ndarray
    weights: np.ndarray          # diagonal of N, strictly decreasing positive
    delta: float = 1e-15
    metric_tag: str = "R12"

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "weights",
                           np.asarray(self.weights, dtype=float))
        if self.metric_tag not in METRIC_TAGS:
            raise ValueError(f"metric_tag must be one of {METRIC_TAGS}")
        w = self.weights
        if w.size >= min(self.a.shape):
            raise ValueError("p must be smaller than min(m, n)")
        if np.any(w <= 0) or np.any(np.diff(w) >= 0):
            raise ValueError("weights must be strictly decreasing and positive")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    @property
    def p(self) -> int:
        return int(self.weights.size)

    @property
    def n_mat(self) -> np.ndarray:
        return np.diag(self.weights)


@dataclass(frozen=True)
class SvdBenchmarkSpec:
    """Rank-p test matrix with geometric singular values 1, g, ..., g^{p-1}."""

    m: int
    n: int
    p: int
    gamma: float
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")
        if self.p >= min(self.m, self.n):
            raise ValueError("p must be smaller than min(m, n)")


def cost(problem: SvdProblem, u: np.ndarray, v: np.ndarray) -> float:
    """f(U, V) = -tr(U^T A V N)."""
    return -float(np.trace(u.T @ problem.a @ v @ problem.n_mat))


def euclidean_partials(problem: SvdProblem, u: np.ndarray, v: np.ndarray
                       ) -> tuple[np.ndarray, np.ndarray]:
    n = problem.n_mat
    return (-problem.a @ v @ n, -problem.a.T @ u @ n)


def metric_factors(problem: SvdProblem, u: np.ndarray, v: np.ndarray
                   ) -> MetricFactors:
    """Identity left factors; R12 adds (sym(U^T A V N)^2 + delta I)^{1/2}
    (and its transpose-side counterpart) on the right."""
    if problem.metric_tag == "E":
        return MetricFactors.identity(2)
    n = problem.n_mat
    r1 = linalg.precond_factor(u.T @ problem.a @ v @ n, problem.delta)
    r2 = linalg.precond_factor(v.T @ problem.a.T @ u @ n, problem.delta)
    return MetricFactors([None, None], [r1, r2])


def riemannian_gradient(problem: SvdProblem, u: np.ndarray, v: np.ndarray,
                        factors: MetricFactors | None = None
                        ) -> list[np.ndarray]:
    """Closed-form gradient for both tags.

    E: the classical Stiefel projection of the partials.  R12: scale the
    partials by the right factors, then remove U S M^{-1} with S from the
    Lyapunov equation M^{-1} S + S M^{-1} = 2 sym(U^T bar_eta).
    """
    if factors is None:
        factors = metric_factors(problem, u, v)
    n = problem.n_mat
    gu = problem.a @ v @ n
    gv = problem.a.T @ u @ n
    if problem.metric_tag == "E":
        return [-(gu - u @ linalg.sym(u.T @ gu)),
                -(gv - v @ linalg.sym(v.T @ gv))]
    m12, m22 = factors.right
    bar_u = -np.linalg.solve(m12, gu.T).T
    bar_v = -np.linalg.solve(m22, gv.T).T
    s1 = linalg.lyap_solve(m12, 2.0 * linalg.sym(u.T @ bar_u))
    s2 = linalg.lyap_solve(m22, 2.0 * linalg.sym(v.T @ bar_v))
    return [bar_u - u @ np.linalg.solve(m12, s1.T).T,
            bar_v - v @ np.linalg.solve(m22, s2.T).T]


def build_benchmark(spec: SvdBenchmarkSpec, delta: float = 1e-15,
                    metric_tag: str = "R12"
                    ) -> tuple[SvdProblem, np.ndarray, np.ndarray]:
    """A = U* Sigma V*^T with uniform random orthonormalized factors,
    Sigma = diag(1, g, ..., g^{p-1}) and N = diag(p, ..., 1).

    Returns the problem together with the planted optimum (U*, V*).
    """
    rng = np.random.default_rng(spec.seed)
    u_star = linalg.qf(rng.random((spec.m, spec.p)))
    v_star = linalg.qf(rng.random((spec.n, spec.p)))
    sigma = spec.gamma ** np.arange(spec.p)
    a = (u_star * sigma) @ v_star.T
    weights = np.arange(spec.p, 0, -1, dtype=float)
    return SvdProblem(a, weights, delta, metric_tag), u_star, v_star


def benchmark_spectrum_inputs(spec: SvdBenchmarkSpec,
                              delta: float = 0.0) -> SpectrumInputs:
    """sigma = (1, g, ..., g^{p-1}, 0), mu = (p, ..., 1) for the kappa formulas."""
    sigma = np.append(spec.gamma ** np.arange(spec.p), 0.0)
    mu = np.arange(spec.p, 0, -1, dtype=float)
    return SpectrumInputs(sigma, mu, delta)


def make_manifold_problem(problem: SvdProblem,
                          u_ref: np.ndarray | None = None,
                          v_ref: np.ndarray | None = None) -> ManifoldProblem:
    m, n = problem.a.shape
    kinds = [Stiefel(m, problem.p), Stiefel(n, problem.p)]

    extra = None
    if u_ref is not None and v_ref is not None:
        def extra(x):
            return {"dist_u": subspace_distance(x[0], u_ref),
                    "dist_v": subspace_distance(x[1], v_ref)}

    return ManifoldProblem(
        kinds=kinds,
        cost=lambda x: cost(problem, x[0], x[1]),
        partials=lambda x: list(euclidean_partials(problem, x[0], x[1])),
        metric_factors=lambda x: metric_factors(problem, x[0], x[1]),
        gradient=lambda x, f: riemannian_gradient(problem, x[0], x[1], f),
        extra_metrics=extra,
    )
