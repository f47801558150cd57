"""Linear cost on an ellipsoid under the interpolated metric family.

Minimize -b^T x over {x : x^T B x = 1} with the metric
g_lambda(xi, eta) = <xi, B_lambda eta>, B_lambda = lambda*I + (1-lambda)*B.
The closed-form solution is x* = B^{-1} b / ||B^{-1} b||_B, and the Hessian
condition number at x* equals 1 exactly at lambda = 0, which is what the
kappa sweep reproduces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry, linalg, spectrum
from .geometry import ManifoldProblem

__all__ = ["EllipsoidProblem", "solution", "gradient", "cost",
           "make_manifold_problem", "kappa_sweep", "default_lambda_grid"]


@dataclass(frozen=True)
class EllipsoidProblem:
    B: np.ndarray
    b: np.ndarray
    lam: float = 0.0

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float)
        b = np.asarray(self.b, dtype=float).reshape(-1, 1)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "b", b)
        linalg.chol(self.B_lambda)  # raises unless B_lambda is SPD

    @property
    def B_lambda(self) -> np.ndarray:
        n = self.B.shape[0]
        return self.lam * np.eye(n) + (1.0 - self.lam) * self.B


def solution(problem: EllipsoidProblem) -> np.ndarray:
    """Closed-form minimizer x* = B^{-1} b / ||B^{-1} b||_B (column vector)."""
    if np.linalg.norm(problem.b) == 0:
        raise ValueError("b must be nonzero")
    y = linalg.solve_spd(problem.B, problem.b)
    return y / float(np.sqrt((y.T @ problem.B @ y).item()))


def cost(problem: EllipsoidProblem, x: np.ndarray) -> float:
    return -float((problem.b.T @ x).item())


def gradient(problem: EllipsoidProblem, x: np.ndarray) -> np.ndarray:
    """Riemannian gradient under g_lambda at a feasible x.

    grad = -B_lam^{-1} b + (x^T B B_lam^{-1} b)/(x^T B B_lam^{-1} B x)
           * B_lam^{-1} B x;  it satisfies x^T B grad = 0.
    """
    b_lam = problem.B_lambda
    bl_b = linalg.solve_spd(b_lam, problem.b)
    bx = problem.B @ x
    bl_bx = linalg.solve_spd(b_lam, bx)
    coeff = float((bx.T @ bl_b).item()) / float((bx.T @ bl_bx).item())
    return -bl_b + coeff * bl_bx


def _project(problem: EllipsoidProblem):
    """g_lambda-orthogonal projection onto the tangent space at x.

    The normal space is spanned by B_lam^{-1} B x, so
    Pi(v) = v - (x^T B v)/(x^T B B_lam^{-1} B x) * B_lam^{-1} B x.
    """

    def proj(x, factors, ambient):
        xx = x[0]
        v = ambient[0]
        bx = problem.B @ xx
        bl_bx = linalg.solve_spd(problem.B_lambda, bx)
        coeff = float((bx.T @ v).item()) / float((bx.T @ bl_bx).item())
        return [v - coeff * bl_bx]

    return proj


def make_manifold_problem(problem: EllipsoidProblem) -> ManifoldProblem:
    kind = geometry.Ellipsoid(problem.B)
    b_lam = problem.B_lambda
    x_star = solution(problem)

    def factors(_x):
        return geometry.MetricFactors([b_lam], [None])

    return ManifoldProblem(
        kinds=[kind],
        cost=lambda x: cost(problem, x[0]),
        partials=lambda x: [-problem.b],
        metric_factors=factors,
        gradient=lambda x, f: [gradient(problem, x[0])],
        project=_project(problem),
        extra_metrics=lambda x: {
            "dist_x": float(np.linalg.norm(x[0] - x_star))},
    )


def default_lambda_grid() -> np.ndarray:
    """Grid lambda in {-0.120, -0.115, ..., 1.000} (SPD-infeasible points
    are skipped by kappa_sweep)."""
    return np.round(np.arange(-0.120, 1.000 + 1e-12, 0.005), 10)


def kappa_sweep(problem: EllipsoidProblem,
                grid: np.ndarray | None = None
                ) -> list[tuple[float, float]]:
    """Condition number of the Hessian at x* for each metric in the family.

    Non-SPD B_lambda values are skipped with a diagnostic pair
    (lam, nan).  kappa(0) = 1 up to the finite-difference tolerance.
    """
    if grid is None:
        grid = default_lambda_grid()
    out: list[tuple[float, float]] = []
    for lam in np.asarray(grid, dtype=float):
        try:
            swept = EllipsoidProblem(problem.B, problem.b, float(lam))
        except ValueError:
            out.append((float(lam), float("nan")))
            continue
        mp = make_manifold_problem(swept)
        report = spectrum.numerical_spectrum(mp, [solution(swept)])
        out.append((float(lam), report.kappa))
    return out
