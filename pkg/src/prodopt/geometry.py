"""Product-manifold geometry: points, tangents, metrics, projections.

A point on the product manifold M = M_1 x ... x M_K is a list of dense
blocks, one per component; tangent vectors use the same layout.  Every
metric handled here has the per-block form

    g_x(xi, eta) = sum_k  <xi_k, L_k eta_k R_k>

with SPD factors (L_k, R_k), either of which may be the identity (stored
as None).  This covers the Euclidean metric, the one-sided scaled metrics,
the left/right scaled metrics and the Gram-regularized metric used for
tensor-ring completion; the Gauss-Newton metric is not represented here
(it lives in the solver as a least-squares subproblem).

The closed-form tangent projection for (generalized) Stiefel blocks is
only valid when the left factor equals the block's constraint matrix; any
other pairing is rejected (problem modules supply their own projector in
that case).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from . import linalg

__all__ = [
    "Euclidean",
    "Stiefel",
    "GeneralizedStiefel",
    "Ellipsoid",
    "ComponentKind",
    "MetricFactors",
    "ManifoldProblem",
    "block_norm",
    "block_combine",
    "metric_inner",
    "metric_norm",
    "feasibility_residual",
    "tangency_residual",
    "project_tangent",
    "egrad_to_rgrad",
    "retract",
    "transport",
    "manifold_dimension",
    "random_point",
    "random_tangent",
]

Blocks = list[np.ndarray]

FEASIBILITY_TOL = 1e-10
# Drift beyond this triggers re-retraction (feasibility restoration).
RESTORE_THRESHOLD = 1e-8


@dataclass(frozen=True)
class Euclidean:
    rows: int
    cols: int


@dataclass(frozen=True)
class Stiefel:
    """St(p, n): n x p matrices with orthonormal columns."""

    n: int
    p: int


@dataclass(frozen=True)
class GeneralizedStiefel:
    """St_Sigma(p, n): n x p matrices with X^T Sigma X = I, Sigma SPD."""

    n: int
    p: int
    constraint: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.constraint, dtype=float)
        if c.shape != (self.n, self.n):
            raise ValueError("constraint shape does not match the block")
        object.__setattr__(self, "constraint", c)


@dataclass(frozen=True)
class Ellipsoid:
    """Unit sphere of the B-norm: column vectors x with x^T B x = 1."""

    B: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "B", np.asarray(self.B, dtype=float))


ComponentKind = Union[Euclidean, Stiefel, GeneralizedStiefel, Ellipsoid]


def _constraint_of(kind: ComponentKind) -> np.ndarray | None:
    """Constraint matrix of a Stiefel-type block, None for Euclidean."""
    if isinstance(kind, Euclidean):
        return None
    if isinstance(kind, Stiefel):
        return np.eye(kind.n)
    if isinstance(kind, GeneralizedStiefel):
        return kind.constraint
    if isinstance(kind, Ellipsoid):
        return kind.B
    raise TypeError(f"unknown component kind: {kind!r}")


def block_shape(kind: ComponentKind) -> tuple[int, int]:
    if isinstance(kind, Euclidean):
        return kind.rows, kind.cols
    if isinstance(kind, (Stiefel, GeneralizedStiefel)):
        return kind.n, kind.p
    if isinstance(kind, Ellipsoid):
        return kind.B.shape[0], 1
    raise TypeError(f"unknown component kind: {kind!r}")


@dataclass
class MetricFactors:
    """Per-block SPD factor pairs (L_k, R_k); None marks the identity."""

    left: list[np.ndarray | None]
    right: list[np.ndarray | None]

    def __post_init__(self):
        if len(self.left) != len(self.right):
            raise ValueError("left/right factor lists must have equal length")

    @classmethod
    def identity(cls, n_blocks: int) -> "MetricFactors":
        return cls([None] * n_blocks, [None] * n_blocks)


def _apply_factors(l: np.ndarray | None, r: np.ndarray | None,
                   eta: np.ndarray) -> np.ndarray:
    out = eta if l is None else l @ eta
    if r is not None:
        out = out @ r
    return out


def block_norm(blocks: Sequence[np.ndarray]) -> float:
    """Euclidean (Frobenius) norm of a block tuple."""
    return float(np.sqrt(sum(float(np.sum(b * b)) for b in blocks)))


def block_combine(*terms: tuple[float, Sequence[np.ndarray]]) -> Blocks:
    """Blockwise linear combination sum_i alpha_i * blocks_i."""
    alpha0, blocks0 = terms[0]
    out = [alpha0 * b for b in blocks0]
    for alpha, blocks in terms[1:]:
        for k, b in enumerate(blocks):
            out[k] = out[k] + alpha * b
    return out


def metric_inner(x: Blocks, factors: MetricFactors, xi: Blocks,
                 eta: Blocks) -> float:
    """g_x(xi, eta) = sum_k <xi_k, L_k eta_k R_k>."""
    if not (len(xi) == len(eta) == len(factors.left)):
        raise ValueError("block count mismatch in metric_inner")
    total = 0.0
    for k, (a, b) in enumerate(zip(xi, eta)):
        if a.shape != b.shape:
            raise ValueError(f"block {k} shape mismatch: {a.shape} vs {b.shape}")
        total += float(np.sum(a * _apply_factors(factors.left[k],
                                                 factors.right[k], b)))
    return total


def metric_norm(x: Blocks, factors: MetricFactors, eta: Blocks) -> float:
    return float(np.sqrt(max(metric_inner(x, factors, eta, eta), 0.0)))


def feasibility_residual(kinds: Sequence[ComponentKind], x: Blocks) -> float:
    """Largest constraint violation over the blocks."""
    worst = 0.0
    for kind, blk in zip(kinds, x):
        sigma = _constraint_of(kind)
        if sigma is None:
            continue
        gram = blk.T @ sigma @ blk
        worst = max(worst, float(np.linalg.norm(gram - np.eye(gram.shape[0]))))
    return worst


def tangency_residual(kinds: Sequence[ComponentKind], x: Blocks,
                      eta: Blocks) -> float:
    """Largest violation of sym(X_k^T Sigma_k eta_k) = 0 over the blocks."""
    worst = 0.0
    for kind, blk, e in zip(kinds, x, eta):
        sigma = _constraint_of(kind)
        if sigma is None:
            continue
        worst = max(worst, float(np.linalg.norm(linalg.sym(blk.T @ sigma @ e))))
    return worst


def _same_matrix(a: np.ndarray | None, b: np.ndarray, tol: float = 1e-12) -> bool:
    if a is None:
        return bool(np.allclose(b, np.eye(b.shape[0]), atol=tol))
    if a is b:
        return True
    if a.shape != b.shape:
        return False
    scale = max(np.linalg.norm(b), 1.0)
    return bool(np.linalg.norm(a - b) <= tol * scale)


def project_tangent(x: Blocks, kinds: Sequence[ComponentKind],
                    factors: MetricFactors, ambient: Blocks) -> Blocks:
    """Metric-orthogonal projection of ambient blocks onto the tangent space.

    Per Stiefel-type block the closed form is

        eta_k = bar_eta_k - X_k S_k R_k^{-1},
        R_k^{-1} S_k + S_k R_k^{-1} = 2 sym(X_k^T Sigma_k bar_eta_k),

    valid only when the left factor equals the constraint matrix; other
    pairings raise.  Euclidean blocks pass through unchanged.
    """
    out: Blocks = []
    for k, (kind, blk, bar) in enumerate(zip(kinds, x, ambient)):
        sigma = _constraint_of(kind)
        if sigma is None:
            out.append(np.asarray(bar, dtype=float))
            continue
        if not _same_matrix(factors.left[k], sigma):
            raise ValueError(
                "projection closed form requires left factor = constraint matrix")
        c = 2.0 * linalg.sym(blk.T @ sigma @ bar)
        r = factors.right[k]
        if r is None:
            s = 0.5 * c
            out.append(bar - blk @ s)
        else:
            s = linalg.lyap_solve(r, c)
            out.append(bar - blk @ np.linalg.solve(r, s.T).T)
    return out


def egrad_to_rgrad(x: Blocks, kinds: Sequence[ComponentKind],
                   factors: MetricFactors, partials: Blocks) -> Blocks:
    """Riemannian gradient from Euclidean partials: project(L^{-1} dF R^{-1}).

    The result is the unique tangent vector with
    g_x(grad, zeta) = sum_k <dF_k, zeta_k> for every tangent zeta.
    """
    scaled: Blocks = []
    for k, p in enumerate(partials):
        l, r = factors.left[k], factors.right[k]
        out = p if l is None else linalg.solve_spd(l, p)
        if r is not None:
            out = linalg.solve_spd(r, out.T).T
        scaled.append(out)
    return project_tangent(x, kinds, factors, scaled)


def _retract_block(kind: ComponentKind, blk: np.ndarray, step: np.ndarray
                   ) -> np.ndarray:
    y = blk + step
    if isinstance(kind, Euclidean):
        return y
    if isinstance(kind, Stiefel):
        try:
            return linalg.qf(y)
        except ValueError as exc:
            raise ValueError("retraction rank failure") from exc
    if isinstance(kind, GeneralizedStiefel):
        try:
            r = linalg.chol(y.T @ kind.constraint @ y)
        except ValueError as exc:
            raise ValueError("retraction rank failure") from exc
        return np.linalg.solve(r.T, y.T).T
    if isinstance(kind, Ellipsoid):
        nrm = float(np.sqrt((y.T @ kind.B @ y).item()))
        if nrm < 1e-300:
            raise ValueError("retraction rank failure")
        return y / nrm
    raise TypeError(f"unknown component kind: {kind!r}")


def retract(x: Blocks, kinds: Sequence[ComponentKind], eta: Blocks,
            s: float = 1.0) -> Blocks:
    """Per-kind retraction of x + s*eta back onto the manifold.

    Stiefel uses the QR retraction, generalized Stiefel the Cholesky-based
    generalized QR retraction, ellipsoids the polar retraction and
    Euclidean blocks plain addition.  retract(x, 0) re-feasibilizes x.
    """
    return [_retract_block(kind, blk, s * e)
            for kind, blk, e in zip(kinds, x, eta)]


def restore_feasibility(x: Blocks, kinds: Sequence[ComponentKind],
                        threshold: float = RESTORE_THRESHOLD) -> Blocks:
    """Re-retract at zero step when constraint drift exceeds the threshold."""
    if feasibility_residual(kinds, x) > threshold:
        zero = [np.zeros_like(b) for b in x]
        return retract(x, kinds, zero, 0.0)
    return x


def transport(x_new: Blocks, kinds: Sequence[ComponentKind],
              factors_new: MetricFactors, eta: Blocks) -> Blocks:
    """Vector transport: metric-orthogonal projection onto the new tangent space."""
    return project_tangent(x_new, kinds, factors_new, eta)


def manifold_dimension(kinds: Sequence[ComponentKind]) -> int:
    dim = 0
    for kind in kinds:
        n, p = block_shape(kind)
        if isinstance(kind, Euclidean):
            dim += n * p
        else:
            dim += n * p - p * (p + 1) // 2
    return dim


def random_point(kinds: Sequence[ComponentKind],
                 rng: np.random.Generator) -> Blocks:
    """Feasible point with uniform [0, 1) entries pushed through the retraction."""
    x = []
    for kind in kinds:
        n, p = block_shape(kind)
        raw = rng.random((n, p))
        x.append(_retract_block(kind, raw, np.zeros_like(raw)))
    return x


def random_tangent(x: Blocks, kinds: Sequence[ComponentKind],
                   factors: MetricFactors, rng: np.random.Generator,
                   project: Callable[..., Blocks] | None = None) -> Blocks:
    """Random tangent vector obtained by projecting a random ambient vector.

    `project` overrides the closed-form projection with a problem-specific
    one (signature: point, factors, ambient blocks).
    """
    ambient = [rng.standard_normal(b.shape) for b in x]
    if project is not None:
        return project(x, factors, ambient)
    return project_tangent(x, kinds, factors, ambient)


@dataclass
class ManifoldProblem:
    """Everything a solver needs: cost, partials, metric, component kinds.

    `gradient` and `project` override the generic paths when a problem has
    a closed form (or when its metric's left factor differs from the
    constraint matrix, where the generic projection does not apply).
    extra_metrics feeds per-iteration columns into the run trace;
    progress_metric replaces the cost in threshold-based stopping rules.
    """

    kinds: list[ComponentKind]
    cost: Callable[[Blocks], float]
    partials: Callable[[Blocks], Blocks]
    metric_factors: Callable[[Blocks], MetricFactors]
    gradient: Callable[[Blocks, MetricFactors], Blocks] | None = None
    project: Callable[[Blocks, MetricFactors, Blocks], Blocks] | None = None
    extra_metrics: Callable[[Blocks], dict[str, float]] | None = None
    progress_metric: Callable[[Blocks, float], float] | None = None

    def grad(self, x: Blocks, factors: MetricFactors) -> Blocks:
        if self.gradient is not None:
            return self.gradient(x, factors)
        return egrad_to_rgrad(x, self.kinds, factors, self.partials(x))

    def proj(self, x: Blocks, factors: MetricFactors, ambient: Blocks) -> Blocks:
        if self.project is not None:
            return self.project(x, factors, ambient)
        return project_tangent(x, self.kinds, factors, ambient)
