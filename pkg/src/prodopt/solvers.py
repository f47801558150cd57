"""First-order solvers on product manifolds plus a Gauss-Newton loop.

`rgd` and `rcg` consume a geometry.ManifoldProblem; `gauss_newton` works
on flat parameter vectors through a ResidualProblem (the search space of
the least-squares applications is a product of Euclidean blocks, so steps
are plain additions).  All three produce a RunReport whose trace rows are
deterministic for fixed inputs; wall-clock times are recorded but carry no
semantics.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import geometry
from .geometry import Blocks, ManifoldProblem, MetricFactors

__all__ = [
    "LineSearchParams",
    "StoppingCriteria",
    "CgParams",
    "IterationRecord",
    "RunReport",
    "LineSearchResult",
    "ResidualProblem",
    "StepsizeUnderflowError",
    "armijo_search",
    "exact_quadratic_line_search",
    "rgd",
    "rcg",
    "gauss_newton",
]


class StepsizeUnderflowError(RuntimeError):
    """Raised when backtracking exhausts max_backtracks without acceptance."""


@dataclass
class LineSearchParams:
    """Armijo backtracking parameters: s = rho^l * s_init, smallest feasible l.

    warm_start picks the next initial trial by slope matching,
    s_init = s_prev * slope_prev / slope_cur, so the first-order decrease
    of the first trial matches the previous accepted step; this keeps the
    trial scale meaningful when search-direction norms vary (conjugate
    directions) or when the metric makes optimal steps much longer than 1.
    Disable it when a run must start every search at s0 exactly.
    """

    s0: float = 1.0
    rho: float = 0.5
    sufficient_decrease: float = 1e-4
    max_backtracks: int = 60
    warm_start: bool = True

    def __post_init__(self):
        if not (0.0 < self.rho < 1.0):
            raise ValueError("rho must lie in (0, 1)")
        if not (0.0 < self.sufficient_decrease < 1.0):
            raise ValueError("sufficient_decrease must lie in (0, 1)")
        if self.s0 <= 0:
            raise ValueError("s0 must be positive")


@dataclass
class StoppingCriteria:
    """Termination thresholds; a value of 0 disables the corresponding rule.

    cost_tol applies to the problem's progress metric (the cost itself
    unless the problem supplies one, e.g. the training error in tensor
    completion); rel_change_tol compares successive progress values.
    """

    gnorm_tol: float = 1e-6
    max_iters: int = 10000
    rel_change_tol: float = 0.0
    min_stepsize: float = 0.0
    cost_tol: float = 0.0

    def __post_init__(self):
        for name in ("gnorm_tol", "rel_change_tol", "min_stepsize", "cost_tol"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")


@dataclass
class CgParams:
    """Conjugate-gradient direction rule.

    beta_rule is one of 'hestenes_stiefel' (nonnegative-clamped, with the
    transported previous direction), 'polak_ribiere' (plus-variant) or
    'fletcher_reeves'.  restart_on_nondescent resets to steepest descent
    whenever the combined direction fails the descent test.
    """

    beta_rule: str = "hestenes_stiefel"
    restart_on_nondescent: bool = True

    _RULES = ("hestenes_stiefel", "polak_ribiere", "fletcher_reeves")

    def __post_init__(self):
        if self.beta_rule not in self._RULES:
            raise ValueError(f"beta_rule must be one of {self._RULES}")


@dataclass
class IterationRecord:
    iteration: int
    time_s: float
    cost: float
    gnorm: float
    stepsize: float
    extras: dict[str, float] = field(default_factory=dict)


@dataclass
class RunReport:
    """Per-iteration trace, termination reason and the final iterate."""

    records: list[IterationRecord]
    termination: str
    final_point: object

    @property
    def iterations(self) -> int:
        return self.records[-1].iteration

    def column(self, name: str) -> np.ndarray:
        if name in ("iteration", "time_s", "cost", "gnorm", "stepsize"):
            return np.array([getattr(r, name) for r in self.records])
        return np.array([r.extras[name] for r in self.records])


@dataclass
class LineSearchResult:
    stepsize: float
    evaluations: int
    point: Blocks
    cost: float


def armijo_search(problem: ManifoldProblem, x: Blocks, factors: MetricFactors,
                  grad: Blocks, eta: Blocks, params: LineSearchParams,
                  f0: float | None = None,
                  s_init: float | None = None) -> LineSearchResult:
    """Armijo backtracking: smallest l >= 0 with s = rho^l * s_init satisfying

        f(x) - f(R_x(s eta)) >= -s * a * g_x(grad, eta).

    Requires eta to be a descent direction (g_x(grad, eta) < 0).  Raises
    StepsizeUnderflowError after max_backtracks rejections.
    """
    slope = geometry.metric_inner(x, factors, grad, eta)
    if slope >= 0:
        raise ValueError("not a descent direction")
    if f0 is None:
        f0 = problem.cost(x)
    s = params.s0 if s_init is None else s_init
    evaluations = 0
    for _ in range(params.max_backtracks + 1):
        candidate = geometry.retract(x, problem.kinds, eta, s)
        f_new = problem.cost(candidate)
        evaluations += 1
        if f0 - f_new >= -s * params.sufficient_decrease * slope:
            return LineSearchResult(s, evaluations, candidate, f_new)
        s *= params.rho
    raise StepsizeUnderflowError("stepsize underflow")


def exact_quadratic_line_search(hess_mat: np.ndarray) -> Callable:
    """Exact line search for f(x) = 0.5 x^T A x - b^T x on a Euclidean block.

    Returns a callable with the same signature as armijo_search, for use as
    the line_search hook of rgd/rcg in tests against classical CG theory.
    """

    def search(problem, x, factors, grad, eta, params, f0=None, s_init=None):
        slope = geometry.metric_inner(x, factors, grad, eta)
        if slope >= 0:
            raise ValueError("not a descent direction")
        e = eta[0]
        curvature = float(np.sum(e * (hess_mat @ e)))
        s = -slope / curvature
        candidate = geometry.retract(x, problem.kinds, eta, s)
        return LineSearchResult(s, 1, candidate, problem.cost(candidate))

    return search


def _progress(problem: ManifoldProblem, x: Blocks, cost: float) -> float:
    if problem.progress_metric is not None:
        return problem.progress_metric(x, cost)
    return cost


def _record(records: list[IterationRecord], problem, iteration, t0, cost,
            gnorm, stepsize, x) -> None:
    extras = problem.extra_metrics(x) if problem.extra_metrics else {}
    records.append(IterationRecord(iteration, time.perf_counter() - t0,
                                   cost, gnorm, stepsize, extras))


def _warm_start(ls: LineSearchParams, prev_step: float | None,
                prev_slope: float | None, slope: float) -> float | None:
    """Slope-matching initial trial: keep s * |slope| level across steps."""
    if not ls.warm_start or prev_step is None or prev_slope is None:
        return None
    if slope >= 0:
        return None
    s_init = prev_step * prev_slope / slope
    if not math.isfinite(s_init) or s_init <= 0:
        return None
    return s_init


def _check_threshold_stops(stop: StoppingCriteria, progress: float,
                           progress_prev: float | None,
                           stepsize: float | None) -> str | None:
    if stop.cost_tol > 0 and progress < stop.cost_tol:
        return "cost_tolerance"
    if (stop.rel_change_tol > 0 and progress_prev is not None
            and progress_prev != 0
            and abs((progress - progress_prev) / progress_prev)
            < stop.rel_change_tol):
        return "relative_change"
    if stop.min_stepsize > 0 and stepsize is not None \
            and stepsize < stop.min_stepsize:
        return "stepsize_underflow"
    return None


def rgd(problem: ManifoldProblem, x0: Blocks, ls: LineSearchParams,
        stop: StoppingCriteria,
        line_search: Callable | None = None) -> RunReport:
    """Riemannian gradient descent with Armijo backtracking.

    The metric factors are recomputed once per outer iteration and shared
    by the gradient, the line-search slope and the gradient norm.  The cost
    sequence is non-increasing by the Armijo guarantee.
    """
    search = line_search if line_search is not None else armijo_search
    t0 = time.perf_counter()
    x = geometry.restore_feasibility(x0, problem.kinds)
    factors = problem.metric_factors(x)
    grad = problem.grad(x, factors)
    gnorm = geometry.metric_norm(x, factors, grad)
    cost = problem.cost(x)
    records: list[IterationRecord] = []
    _record(records, problem, 0, t0, cost, gnorm, float("nan"), x)

    prev_progress: float | None = None
    prev_step: float | None = None
    prev_slope: float | None = None
    termination = "max_iterations"
    for t in range(stop.max_iters + 1):
        if gnorm < stop.gnorm_tol:
            termination = "gradient_tolerance"
            break
        reason = _check_threshold_stops(stop, _progress(problem, x, cost),
                                        prev_progress, prev_step)
        if reason is not None:
            termination = reason
            break
        if t >= stop.max_iters:
            termination = "max_iterations"
            break
        prev_progress = _progress(problem, x, cost)
        eta = [-g for g in grad]
        slope = -gnorm ** 2
        s_init = _warm_start(ls, prev_step, prev_slope, slope)
        try:
            result = search(problem, x, factors, grad, eta, ls,
                            f0=cost, s_init=s_init)
        except StepsizeUnderflowError:
            termination = "stepsize_underflow"
            break
        x = geometry.restore_feasibility(result.point, problem.kinds)
        cost = result.cost
        prev_step, prev_slope = result.stepsize, slope
        factors = problem.metric_factors(x)
        grad = problem.grad(x, factors)
        gnorm = geometry.metric_norm(x, factors, grad)
        _record(records, problem, t + 1, t0, cost, gnorm, result.stepsize, x)
    return RunReport(records, termination, x)


def rcg(problem: ManifoldProblem, x0: Blocks, ls: LineSearchParams,
        stop: StoppingCriteria, cg: CgParams | None = None,
        line_search: Callable | None = None) -> RunReport:
    """Riemannian conjugate gradient with projection-based vector transport.

    Direction: eta_t = -grad_t + beta_t * T(eta_{t-1}) with beta_0 = 0.
    beta follows cg.beta_rule; a direction failing the descent test is
    replaced by -grad (restart).
    """
    cg = cg if cg is not None else CgParams()
    search = line_search if line_search is not None else armijo_search
    t0 = time.perf_counter()
    x = geometry.restore_feasibility(x0, problem.kinds)
    factors = problem.metric_factors(x)
    grad = problem.grad(x, factors)
    gnorm = geometry.metric_norm(x, factors, grad)
    cost = problem.cost(x)
    records: list[IterationRecord] = []
    _record(records, problem, 0, t0, cost, gnorm, float("nan"), x)

    eta_prev: Blocks | None = None
    grad_prev: Blocks | None = None
    gnorm_prev = gnorm
    prev_progress: float | None = None
    prev_step: float | None = None
    prev_slope: float | None = None
    termination = "max_iterations"
    for t in range(stop.max_iters + 1):
        if gnorm < stop.gnorm_tol:
            termination = "gradient_tolerance"
            break
        reason = _check_threshold_stops(stop, _progress(problem, x, cost),
                                        prev_progress, prev_step)
        if reason is not None:
            termination = reason
            break
        if t >= stop.max_iters:
            termination = "max_iterations"
            break
        prev_progress = _progress(problem, x, cost)

        if eta_prev is None:
            eta = [-g for g in grad]
            slope = -gnorm ** 2
        else:
            t_eta = problem.proj(x, factors, eta_prev)
            t_grad = problem.proj(x, factors, grad_prev)
            y = geometry.block_combine((1.0, grad), (-1.0, t_grad))
            if cg.beta_rule == "fletcher_reeves":
                beta = (gnorm / gnorm_prev) ** 2 if gnorm_prev > 0 else 0.0
            elif cg.beta_rule == "polak_ribiere":
                num = geometry.metric_inner(x, factors, grad, y)
                beta = max(0.0, num / gnorm_prev ** 2) if gnorm_prev > 0 else 0.0
            else:
                num = geometry.metric_inner(x, factors, grad, y)
                den = geometry.metric_inner(x, factors, t_eta, y)
                beta = max(0.0, num / den) if den != 0 else 0.0
            eta = geometry.block_combine((-1.0, grad), (beta, t_eta))
            slope = geometry.metric_inner(x, factors, grad, eta)
            if cg.restart_on_nondescent and slope >= 0:
                eta = [-g for g in grad]
                slope = -gnorm ** 2

        s_init = _warm_start(ls, prev_step, prev_slope, slope)
        try:
            result = search(problem, x, factors, grad, eta, ls,
                            f0=cost, s_init=s_init)
        except StepsizeUnderflowError:
            termination = "stepsize_underflow"
            break
        eta_prev, grad_prev, gnorm_prev = eta, grad, gnorm
        x = geometry.restore_feasibility(result.point, problem.kinds)
        cost = result.cost
        prev_step, prev_slope = result.stepsize, slope
        factors = problem.metric_factors(x)
        grad = problem.grad(x, factors)
        gnorm = geometry.metric_norm(x, factors, grad)
        _record(records, problem, t + 1, t0, cost, gnorm, result.stepsize, x)
    return RunReport(records, termination, x)


@dataclass
class ResidualProblem:
    """Nonlinear least squares min 0.5 ||F(x)||^2 over a flat parameter vector.

    jacobian(x) returns the dense Jacobian of F; damping keeps the normal
    equations solvable when DF has a null space (gauge freedom).
    """

    residual: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    extra_metrics: Callable[[np.ndarray], dict[str, float]] | None = None
    progress_metric: Callable[[np.ndarray, float], float] | None = None


def gauss_newton(problem: ResidualProblem, x0: np.ndarray,
                 stop: StoppingCriteria, damping: float = 1e-10,
                 safeguard: bool = True,
                 max_halvings: int = 5) -> RunReport:
    """Gauss-Newton: solve (J^T J + lam I) step = -J^T F, update x <- x + step.

    lam = damping * max(diag(J^T J)) regularizes rank-deficient systems.
    The unit step is halved up to max_halvings times if ||F|| increases
    (safeguard=False disables this and always takes the unit step); any
    safeguard activity is reported in the 'halvings' trace column.  The
    reported gnorm is the gradient norm under the Gauss-Newton metric,
    sqrt(step^T (J^T J + lam I) step).
    """
    t0 = time.perf_counter()
    x = np.asarray(x0, dtype=float).copy()
    f_vec = problem.residual(x)
    cost = 0.5 * float(f_vec @ f_vec)

    def record(records, iteration, cost, gnorm, stepsize, halvings):
        extras = dict(problem.extra_metrics(x)) if problem.extra_metrics else {}
        extras["halvings"] = float(halvings)
        records.append(IterationRecord(iteration, time.perf_counter() - t0,
                                       cost, gnorm, stepsize, extras))

    def progress(cost):
        if problem.progress_metric is not None:
            return problem.progress_metric(x, cost)
        return cost

    records: list[IterationRecord] = []
    record(records, 0, cost, float("nan"), float("nan"), 0)
    prev_progress: float | None = None
    termination = "max_iterations"
    for t in range(stop.max_iters + 1):
        reason = _check_threshold_stops(stop, progress(cost),
                                        prev_progress, None)
        if reason is not None:
            termination = reason
            break
        if t >= stop.max_iters:
            termination = "max_iterations"
            break
        prev_progress = progress(cost)

        jac = problem.jacobian(x)
        jtj = jac.T @ jac
        g = jac.T @ f_vec
        lam = damping * max(float(np.max(np.diag(jtj))), 1.0)
        try:
            step = np.linalg.solve(jtj + lam * np.eye(jtj.shape[0]), -g)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError("damping failure in Gauss-Newton solve") from exc
        gnorm = float(np.sqrt(max(-float(step @ g), 0.0)))
        if gnorm < stop.gnorm_tol:
            termination = "gradient_tolerance"
            break

        s = 1.0
        halvings = 0
        x_new = x + step
        f_new = problem.residual(x_new)
        if safeguard:
            while float(f_new @ f_new) > float(f_vec @ f_vec) \
                    and halvings < max_halvings:
                s *= 0.5
                halvings += 1
                x_new = x + s * step
                f_new = problem.residual(x_new)
        x, f_vec = x_new, f_new
        cost = 0.5 * float(f_vec @ f_vec)
        record(records, t + 1, cost, gnorm, s, halvings)
    return RunReport(records, termination, x)
