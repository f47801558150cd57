"""Condition numbers of the Riemannian Hessian at minimizers.

Closed-form values come from the singular values sigma of the whitened
coupling matrix and the diagonal weights mu: each metric admits an
explicit max/min ratio over Rayleigh-quotient extremes.  The numerical
oracle assembles the Hessian on a metric-orthonormal tangent basis by
central finite differences of the gradient field, which is exact at
critical points (the connection correction vanishes with the gradient)
and stays independent of the closed forms it is used to validate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry, linalg
from .geometry import Blocks, ManifoldProblem

__all__ = [
    "SpectrumInputs",
    "SpectrumReport",
    "v_bar",
    "v_under",
    "kappa_cca_l12",
    "kappa_cca_lr12",
    "kappa_svd",
    "kappa_ordering_check",
    "tangent_basis",
    "numerical_spectrum",
]

CRITICALITY_TOL = 1e-8
FD_STEP_SCALE = 1e-5


@dataclass(frozen=True)
class SpectrumInputs:
    """Spectral data at a minimizer: sigma (length >= m+1), mu (length m).

    sigma must be strictly decreasing over its first m+1 entries and
    nonnegative (a zero sigma_{m+1} is the exact-rank case); mu must be
    strictly decreasing and positive.
    """

    sigma: np.ndarray
    mu: np.ndarray
    delta: float = 0.0

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "mu", mu)
        m = mu.size
        if sigma.size < m + 1:
            raise ValueError("need at least m+1 singular values")
        head = sigma[:m + 1]
        if np.any(np.diff(head) >= 0):
            raise ValueError("sigma must be strictly decreasing up to m+1")
        if np.any(head < 0):
            raise ValueError("sigma must be nonnegative")
        if np.any(mu <= 0) or np.any(np.diff(mu) >= 0):
            raise ValueError("mu must be strictly decreasing and positive")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")

    @property
    def m(self) -> int:
        return int(self.mu.size)


def v_bar(inputs: SpectrumInputs, i: int, j: int) -> float:
    """Upper Rayleigh bound for the (i, j) tangent pair, 1-based, i < j <= m+1."""
    s, mu, d, m = inputs.sigma, inputs.mu, inputs.delta, inputs.m
    if not (1 <= i < j <= m + 1):
        raise ValueError("need 1 <= i < j <= m+1")
    if j <= m:
        den = math.sqrt(mu[i - 1] ** 2 * s[i - 1] ** 2 + d) \
            + math.sqrt(mu[j - 1] ** 2 * s[j - 1] ** 2 + d)
        return (mu[i - 1] + mu[j - 1]) * (s[i - 1] + s[j - 1]) / den
    return mu[i - 1] * (s[i - 1] + s[m]) \
        / math.sqrt(mu[i - 1] ** 2 * s[i - 1] ** 2 + d)


def v_under(inputs: SpectrumInputs, i: int, j: int) -> float:
    """Lower Rayleigh bound for the (i, j) tangent pair, 1-based, i < j <= m+1."""
    s, mu, d, m = inputs.sigma, inputs.mu, inputs.delta, inputs.m
    if not (1 <= i < j <= m + 1):
        raise ValueError("need 1 <= i < j <= m+1")
    if j <= m:
        den = math.sqrt(mu[i - 1] ** 2 * s[i - 1] ** 2 + d) \
            + math.sqrt(mu[j - 1] ** 2 * s[j - 1] ** 2 + d)
        return (mu[i - 1] - mu[j - 1]) * (s[i - 1] - s[j - 1]) / den
    return mu[i - 1] * (s[i - 1] - s[m]) \
        / math.sqrt(mu[i - 1] ** 2 * s[i - 1] ** 2 + d)


def kappa_cca_l12(inputs: SpectrumInputs) -> float:
    """Hessian condition number under the left-scaled metric (both blocks).

    kappa = max{(mu1+mu2)(s1+s2)/2, mu1(s1+s_{m+1})}
          / min{min_{i<j<=m}(mu_i-mu_j)(s_i-s_j)/2, mu_m(s_m-s_{m+1})}.
    """
    s, mu, m = inputs.sigma, inputs.mu, inputs.m
    num_terms = [mu[0] * (s[0] + s[m])]
    den_terms = [mu[m - 1] * (s[m - 1] - s[m])]
    if m >= 2:
        num_terms.append(0.5 * (mu[0] + mu[1]) * (s[0] + s[1]))
        for i in range(m - 1):
            for j in range(i + 1, m):
                den_terms.append(0.5 * (mu[i] - mu[j]) * (s[i] - s[j]))
    den = min(den_terms)
    if den <= 0:
        raise ValueError("zero Hessian eigenvalue")
    return max(num_terms) / den


def kappa_cca_lr12(inputs: SpectrumInputs, adjacent_only: bool = False) -> float:
    """Hessian condition number under the left+right scaled metric.

    kappa = max v_bar / min v_under over all pairs i < j <= m+1; with
    adjacent_only=True only the (i, i+1) pairs enter, the simplification
    valid for small delta.
    """
    m = inputs.m
    if adjacent_only:
        pairs = [(i, i + 1) for i in range(1, m + 1)]
    else:
        pairs = [(i, j) for i in range(1, m + 1) for j in range(i + 1, m + 2)]
    den = min(v_under(inputs, i, j) for i, j in pairs)
    if den <= 0:
        raise ValueError("zero Hessian eigenvalue")
    return max(v_bar(inputs, i, j) for i, j in pairs) / den


def kappa_svd(inputs: SpectrumInputs, metric: str) -> float:
    """Condition number for the truncated-SVD problem under either metric.

    The displays match the CCA ones with the identity constraint, so this
    delegates: 'euclidean' -> the unscaled ratio, 'r12' -> the
    right-scaled ratio.
    """
    if metric == "euclidean":
        return kappa_cca_l12(inputs)
    if metric == "r12":
        return kappa_cca_lr12(inputs)
    raise ValueError("metric must be 'euclidean' or 'r12'")


def kappa_ordering_check(inputs: SpectrumInputs) -> bool:
    """True iff the scaled metric improves kappa and the pair bounds are ordered.

    Checks kappa_lr12 <= kappa_l12 together with the orderings
    v_bar(i,j) > v_bar(i,k) and v_under(i,j) < v_under(i,k) for all
    1 <= i < j < k <= m+1, at the inputs' delta (expected tiny).
    """
    m = inputs.m
    if m < 2:
        raise ValueError("ordering check requires m >= 2")
    if kappa_cca_lr12(inputs) > kappa_cca_l12(inputs) * (1.0 + 1e-12):
        return False
    for i in range(1, m + 1):
        for j in range(i + 1, m + 1):
            for k in range(j + 1, m + 2):
                if not v_bar(inputs, i, j) > v_bar(inputs, i, k):
                    return False
                if not v_under(inputs, i, j) < v_under(inputs, i, k):
                    return False
    return True


@dataclass
class SpectrumReport:
    """Eigenvalues (ascending) of the Hessian on the tangent space."""

    eigenvalues: np.ndarray
    kappa: float
    dimension: int
    sym_residual: float
    gram_error: float
    diagnostic: str | None = None


def _block_dimension(kind) -> int:
    n, p = geometry.block_shape(kind)
    if isinstance(kind, geometry.Euclidean):
        return n * p
    return n * p - p * (p + 1) // 2


def _half_factors(factors: geometry.MetricFactors, k: int):
    l, r = factors.left[k], factors.right[k]
    ls = None if l is None else linalg.spd_sqrt(l)
    li = None if l is None else linalg.spd_inv_sqrt(l)
    rs = None if r is None else linalg.spd_sqrt(r)
    ri = None if r is None else linalg.spd_inv_sqrt(r)
    return ls, li, rs, ri


def _apply_pair(l, r, cols: np.ndarray, n: int, p: int) -> np.ndarray:
    """Apply xi -> L xi R to each flattened column of `cols`."""
    if l is None and r is None:
        return cols
    mats = cols.reshape(n, p, -1)
    if l is not None:
        mats = np.einsum("ij,jpc->ipc", l, mats)
    if r is not None:
        mats = np.einsum("ipc,pq->iqc", mats, r)
    return mats.reshape(n * p, -1)


def tangent_basis(problem: ManifoldProblem, x: Blocks,
                  factors: geometry.MetricFactors
                  ) -> tuple[list[np.ndarray], list[int]]:
    """Metric-orthonormal tangent basis, one matrix of columns per block.

    The component-wise ambient basis is restricted to the tangent space by
    the problem's projection, mapped through the per-block square-root
    factors, orthonormalized by SVD and mapped back; the result is exactly
    g-orthonormal and block-confined (the metric is block-diagonal).
    """
    bases: list[np.ndarray] = []
    dims: list[int] = []
    for k, (kind, blk) in enumerate(zip(problem.kinds, x)):
        n, p = blk.shape
        cols = np.zeros((n * p, n * p))
        for idx in range(n * p):
            ambient = [np.zeros_like(b) for b in x]
            ambient[k].flat[idx] = 1.0
            cols[:, idx] = problem.proj(x, factors, ambient)[k].reshape(-1)
        ls, li, rs, ri = _half_factors(factors, k)
        w = _apply_pair(ls, rs, cols, n, p)
        u, svals, _ = np.linalg.svd(w, full_matrices=False)
        dim = _block_dimension(kind)
        if svals[dim - 1] <= 1e-8 * svals[0]:
            raise ValueError("tangent basis is rank deficient")
        if dim < svals.size and svals[dim] > 1e-6 * svals[0]:
            raise ValueError("projected basis exceeds the tangent dimension")
        bases.append(_apply_pair(li, ri, u[:, :dim], n, p))
        dims.append(dim)
    return bases, dims


def numerical_spectrum(problem: ManifoldProblem, x_star: Blocks
                       ) -> SpectrumReport:
    """Hessian spectrum at a critical point via finite differences.

    Builds a g-orthonormal tangent basis, evaluates the Riemannian
    gradient field at retracted points x +/- h*xi_b with
    h = 1e-5 * (1 + ||x||), and reads off H_ab = g(xi_a, central diff).
    The matrix is symmetrized after a symmetry-residual check; a
    non-positive smallest eigenvalue is reported as kappa = inf with a
    diagnostic rather than an error.
    """
    factors = problem.metric_factors(x_star)
    grad0 = problem.grad(x_star, factors)
    if geometry.metric_norm(x_star, factors, grad0) >= CRITICALITY_TOL:
        raise ValueError("numerical spectrum requires a critical point")

    bases, dims = tangent_basis(problem, x_star, factors)
    dim = int(sum(dims))
    h = FD_STEP_SCALE * (1.0 + geometry.block_norm(x_star))
    shapes = [b.shape for b in x_star]
    sizes = [n * p for n, p in shapes]
    offsets = np.concatenate(([0], np.cumsum(sizes)))

    def gradient_field(point: Blocks) -> np.ndarray:
        f = problem.metric_factors(point)
        g = problem.grad(point, f)
        return np.concatenate([b.reshape(-1) for b in g])

    diffs = np.empty((offsets[-1], dim))
    col = 0
    for k, basis in enumerate(bases):
        n, p = shapes[k]
        for c in range(basis.shape[1]):
            xi = [np.zeros(s) for s in shapes]
            xi[k] = basis[:, c].reshape(n, p)
            plus = geometry.retract(x_star, problem.kinds, xi, h)
            minus = geometry.retract(x_star, problem.kinds, xi, -h)
            diffs[:, col] = (gradient_field(plus) - gradient_field(minus)) / (2 * h)
            col += 1

    hess = np.empty((dim, dim))
    gram_error = 0.0
    row = 0
    for k, basis in enumerate(bases):
        n, p = shapes[k]
        block_rows = slice(row, row + dims[k])
        l, r = factors.left[k], factors.right[k]
        gd = _apply_pair(l, r, diffs[offsets[k]:offsets[k + 1], :], n, p)
        hess[block_rows, :] = basis.T @ gd
        gb = _apply_pair(l, r, basis, n, p)
        gram = basis.T @ gb
        gram_error = max(gram_error,
                         float(np.linalg.norm(gram - np.eye(dims[k]))))
        row += dims[k]

    sym_residual = float(np.linalg.norm(hess - hess.T)
                         / max(np.linalg.norm(hess), 1e-300))
    eigenvalues = np.linalg.eigvalsh(linalg.sym(hess))
    lam_min, lam_max = float(eigenvalues[0]), float(eigenvalues[-1])
    diagnostic = None
    if lam_min <= 0:
        kappa = math.inf
        diagnostic = (f"smallest eigenvalue {lam_min:.3e} is not positive; "
                      "the point is not a strict local minimizer")
    else:
        kappa = lam_max / lam_min
    return SpectrumReport(eigenvalues, kappa, dim, sym_residual, gram_error,
                          diagnostic)
