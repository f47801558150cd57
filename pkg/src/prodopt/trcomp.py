"""Tensor-ring completion from sampled entries.

A tensor-ring decomposition stores one core per mode; entry (i_1,...,i_d)
is the trace of the cyclic product of per-mode slices U_k(i_k).  Cores are
kept in mode-2 unfolding layout: core k is the n_k x (r_{k-1} r_k) matrix
whose row i is the column-major vec of U_k(i).  The completion cost is the
scaled squared residual on the observed set; both the Gram-regularized
first-order metric and the Gauss-Newton least-squares assembly are built
from the shared subchain products computed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .geometry import Euclidean, ManifoldProblem, MetricFactors
from .solvers import ResidualProblem, StoppingCriteria

__all__ = [
    "TrCores",
    "SamplingSet",
    "tr_entry",
    "tr_entries",
    "chain_rows",
    "subchain_unfolding",
    "cost_and_residual",
    "euclidean_partials",
    "tr_metric_factors",
    "assemble_gn_system",
    "tr_gn_step",
    "training_test_errors",
    "random_cores",
    "exact_recovery_instance",
    "make_manifold_problem",
    "make_residual_problem",
    "default_stopping",
]


@dataclass(frozen=True)
class TrCores:
    """Ring cores in mode-2 unfolding layout; ranks has length d+1, r_0 = r_d."""

    dims: tuple[int, ...]
    ranks: tuple[int, ...]
    cores: tuple[np.ndarray, ...]

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        ranks = tuple(int(r) for r in self.ranks)
        cores = tuple(np.asarray(c, dtype=float) for c in self.cores)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "ranks", ranks)
        object.__setattr__(self, "cores", cores)
        d = len(dims)
        if len(ranks) != d + 1 or ranks[0] != ranks[-1]:
            raise ValueError("ranks must have length d+1 with r_0 = r_d")
        for k, core in enumerate(cores):
            if core.shape != (dims[k], ranks[k] * ranks[k + 1]):
                raise ValueError(f"core {k} has shape {core.shape}, expected "
                                 f"{(dims[k], ranks[k] * ranks[k + 1])}")

    @property
    def d(self) -> int:
        return len(self.dims)

    def slices(self, k: int) -> np.ndarray:
        """Stack of lateral slices U_k(i), shape (n_k, r_{k-1}, r_k)."""
        n, rp, rn = self.dims[k], self.ranks[k], self.ranks[k + 1]
        return self.cores[k].reshape(n, rn, rp).swapaxes(1, 2)

    def flatten(self) -> np.ndarray:
        return np.concatenate([c.reshape(-1) for c in self.cores])

    def with_flat(self, flat: np.ndarray) -> "TrCores":
        cores = []
        pos = 0
        for k in range(self.d):
            size = self.dims[k] * self.ranks[k] * self.ranks[k + 1]
            cores.append(flat[pos:pos + size].reshape(self.cores[k].shape))
            pos += size
        if pos != flat.size:
            raise ValueError("flat vector length does not match the cores")
        return TrCores(self.dims, self.ranks, tuple(cores))


@dataclass(frozen=True)
class SamplingSet:
    """Observed multi-indices (0-based, lexicographically sorted, unique)
    with aligned values."""

    indices: np.ndarray
    values: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        vals = np.asarray(self.values, dtype=float)
        dims = tuple(int(n) for n in self.dims)
        if idx.ndim != 2 or idx.shape[1] != len(dims):
            raise ValueError("indices must be a (count, d) array")
        if vals.shape != (idx.shape[0],):
            raise ValueError("values must align with indices")
        if np.any(idx < 0) or np.any(idx >= np.asarray(dims)[None, :]):
            raise ValueError("index out of range")
        order = np.lexsort(idx.T[::-1])
        idx, vals = idx[order], vals[order]
        if idx.shape[0] > 1:
            keep = np.concatenate(([True],
                                   np.any(np.diff(idx, axis=0) != 0, axis=1)))
            idx, vals = idx[keep], vals[keep]
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "dims", dims)

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    @property
    def rate(self) -> float:
        return len(self) / math.prod(self.dims)


def tr_entry(cores: TrCores, idx) -> float:
    """Single entry: trace of the left-to-right slice product."""
    mat = cores.slices(0)[idx[0]]
    for k in range(1, cores.d):
        mat = mat @ cores.slices(k)[idx[k]]
    return float(np.trace(mat))


def _prefix_suffix(cores: TrCores, indices: np.ndarray):
    """prefix[t] = U_1...U_t, suffix[t] = U_t...U_d per sampled index
    (prefix[0] and suffix[d+1] are identities)."""
    count = indices.shape[0]
    r0 = cores.ranks[0]
    eye = np.broadcast_to(np.eye(r0), (count, r0, r0))
    prefix = [eye]
    for k in range(cores.d):
        prefix.append(prefix[-1] @ cores.slices(k)[indices[:, k]])
    suffix = [None] * (cores.d + 2)
    suffix[cores.d + 1] = eye
    for k in range(cores.d, 0, -1):
        suffix[k] = cores.slices(k - 1)[indices[:, k - 1]] @ suffix[k + 1]
    return prefix, suffix


def tr_entries(cores: TrCores, indices: np.ndarray) -> np.ndarray:
    """Batched entry evaluation at the given (count, d) index array."""
    indices = np.asarray(indices, dtype=np.int64)
    prefix, _ = _prefix_suffix(cores, indices)
    return np.einsum("nii->n", prefix[-1])


def chain_rows(cores: TrCores, indices: np.ndarray) -> list[np.ndarray]:
    """Per-mode weight rows for sampled entries.

    rows[k][e] is the column-major vec of the transposed complementary
    chain (prod_{j>k} U_j(i_j) prod_{j<k} U_j(i_j))^T, so that
    entry_e = cores[k][i_k] . rows[k][e] for every mode k.
    """
    indices = np.asarray(indices, dtype=np.int64)
    prefix, suffix = _prefix_suffix(cores, indices)
    count = indices.shape[0]
    rows = []
    for k in range(cores.d):
        chain = suffix[k + 2] @ prefix[k]
        rows.append(chain.reshape(count, -1))
    return rows


def subchain_unfolding(cores: TrCores, k: int) -> np.ndarray:
    """Mode-2 unfolding of the complementary subchain tensor for mode k.

    Rows run over all multi-indices of the other modes, first (smallest)
    mode fastest; row r is the column-major vec of the r_{k-1} x r_k
    subchain slice.
    """
    other = [j for j in range(cores.d) if j != k]
    if not other:
        return np.eye(cores.ranks[0]).T.reshape(1, -1)
    grids = np.meshgrid(*[np.arange(cores.dims[j]) for j in other],
                        indexing="ij")
    combos = np.zeros((grids[0].size, cores.d), dtype=np.int64)
    for j, g in zip(other, grids):
        combos[:, j] = g.reshape(-1, order="F")
    return chain_rows(cores, combos)[k]


def cost_and_residual(cores: TrCores, omega: SamplingSet
                      ) -> tuple[float, np.ndarray]:
    """f = ||residual||^2 / (2 p) and the residual values on the sampled set."""
    resid = tr_entries(cores, omega.indices) - omega.values
    return float(resid @ resid) / (2.0 * omega.rate), resid


def euclidean_partials(cores: TrCores, omega: SamplingSet,
                       resid: np.ndarray | None = None) -> list[np.ndarray]:
    """Blockwise partial gradients of the completion cost.

    Row i_k of block k accumulates the complementary-chain weight times
    residual / p over the observed entries whose k-th index is i_k.
    """
    if resid is None:
        _, resid = cost_and_residual(cores, omega)
    rows = chain_rows(cores, omega.indices)
    scale = resid / omega.rate
    out = []
    for k in range(cores.d):
        grad_k = np.zeros_like(cores.cores[k])
        np.add.at(grad_k, omega.indices[:, k], rows[k] * scale[:, None])
        out.append(grad_k)
    return out


def tr_metric_factors(cores: TrCores, delta: float) -> MetricFactors:
    """Right factors W_{!=k}^T W_{!=k} + delta I of the completion metric."""
    right = []
    for k in range(cores.d):
        w = subchain_unfolding(cores, k)
        right.append(w.T @ w + delta * np.eye(w.shape[1]))
    return MetricFactors([None] * cores.d, right)


def assemble_gn_system(cores: TrCores, omega: SamplingSet,
                       resid: np.ndarray | None = None
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Dense least-squares system for the Gauss-Newton step.

    One row per observed entry; the block-k columns hold the
    complementary-chain weights at the i_k-row positions of core k, all
    scaled by 1/sqrt(p).  rhs = -F where F = residual / sqrt(p), so the
    gradient of 0.5 ||J v + F||^2 at v = 0 equals the stacked partials.
    """
    if resid is None:
        _, resid = cost_and_residual(cores, omega)
    rows = chain_rows(cores, omega.indices)
    count = len(omega)
    sizes = [cores.dims[k] * cores.ranks[k] * cores.ranks[k + 1]
             for k in range(cores.d)]
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    sqrt_p = math.sqrt(omega.rate)
    jac = np.zeros((count, int(offsets[-1])))
    entry_ids = np.arange(count)[:, None]
    for k in range(cores.d):
        rr = cores.ranks[k] * cores.ranks[k + 1]
        cols = offsets[k] + omega.indices[:, k, None] * rr + np.arange(rr)
        jac[entry_ids, cols] = rows[k] / sqrt_p
    return jac, -resid / sqrt_p


def tr_gn_step(cores: TrCores, omega: SamplingSet, damping: float = 1e-10,
               safeguard: bool = True, max_halvings: int = 5
               ) -> tuple[TrCores, dict]:
    """One Gauss-Newton update: damped normal equations, unit step.

    The safeguard halves the step up to max_halvings times if the residual
    norm increases; its activity is reported in the info dict.
    """
    _, resid = cost_and_residual(cores, omega)
    jac, rhs = assemble_gn_system(cores, omega, resid)
    jtj = jac.T @ jac
    lam = damping * max(float(np.max(np.diag(jtj))), 1.0)
    try:
        step = np.linalg.solve(jtj + lam * np.eye(jtj.shape[0]), jac.T @ rhs)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("damping failure in Gauss-Newton solve") from exc
    norm_old = float(np.linalg.norm(resid))
    s, halvings = 1.0, 0
    new = cores.with_flat(cores.flatten() + step)
    _, resid_new = cost_and_residual(new, omega)
    if safeguard:
        while float(np.linalg.norm(resid_new)) > norm_old \
                and halvings < max_halvings:
            s *= 0.5
            halvings += 1
            new = cores.with_flat(cores.flatten() + s * step)
            _, resid_new = cost_and_residual(new, omega)
    info = {"residual_norm_before": norm_old,
            "residual_norm_after": float(np.linalg.norm(resid_new)),
            "stepsize": s, "halvings": halvings}
    return new, info


def training_test_errors(cores: TrCores, omega: SamplingSet,
                         gamma: SamplingSet) -> tuple[float, float]:
    """Relative reconstruction errors on the training and test sets."""

    def rel_error(sampling: SamplingSet) -> float:
        ref = float(np.linalg.norm(sampling.values))
        if ref == 0:
            raise ValueError("reference values on the sampling set are all zero")
        vals = tr_entries(cores, sampling.indices)
        return float(np.linalg.norm(vals - sampling.values)) / ref

    return rel_error(omega), rel_error(gamma)


def random_cores(dims, ranks, rng: np.random.Generator) -> TrCores:
    """Cores with i.i.d. uniform [0, 1) entries."""
    dims = tuple(int(n) for n in dims)
    ranks = tuple(int(r) for r in ranks)
    cores = tuple(rng.random((dims[k], ranks[k] * ranks[k + 1]))
                  for k in range(len(dims)))
    return TrCores(dims, ranks, cores)


def random_indices(dims, count: int, rng: np.random.Generator) -> np.ndarray:
    """`count` distinct multi-indices sampled without replacement."""
    total = math.prod(dims)
    if count > total:
        raise ValueError("cannot sample more indices than the grid holds")
    flat = rng.choice(total, size=count, replace=False)
    return np.stack(np.unravel_index(flat, dims), axis=1).astype(np.int64)


def exact_recovery_instance(dims, ranks, rate: float, seed: int,
                            test_count: int = 100
                            ) -> tuple[SamplingSet, SamplingSet, TrCores, TrCores]:
    """Seeded exact-recovery setup: ground-truth cores, disjoint train/test
    sampling sets with values from the truth, and a random initial guess."""
    rng = np.random.default_rng(seed)
    truth = random_cores(dims, ranks, rng)
    n_train = int(round(rate * math.prod(dims)))
    picked = random_indices(dims, n_train + test_count, rng)
    train_idx, test_idx = picked[:n_train], picked[n_train:]
    omega = SamplingSet(train_idx, tr_entries(truth, train_idx), dims)
    gamma = SamplingSet(test_idx, tr_entries(truth, test_idx), dims)
    init = random_cores(dims, ranks, rng)
    return omega, gamma, truth, init


def default_stopping(max_iters: int = 1000) -> StoppingCriteria:
    """The four completion stopping rules: training error below 1e-14,
    iteration cap, relative change below 1e-8, stepsize below 1e-10."""
    return StoppingCriteria(gnorm_tol=0.0, max_iters=max_iters,
                            rel_change_tol=1e-8, min_stepsize=1e-10,
                            cost_tol=1e-14)


def _error_metrics(omega: SamplingSet, gamma: SamplingSet | None):
    ref_train = float(np.linalg.norm(omega.values))

    def extras(cores: TrCores) -> dict[str, float]:
        vals = tr_entries(cores, omega.indices)
        out = {"train_error": float(np.linalg.norm(vals - omega.values))
               / ref_train}
        if gamma is not None:
            ref = float(np.linalg.norm(gamma.values))
            tvals = tr_entries(cores, gamma.indices)
            out["test_error"] = float(np.linalg.norm(tvals - gamma.values)) / ref
        return out

    return extras


def make_manifold_problem(omega: SamplingSet, template: TrCores,
                          delta: float = 1e-15,
                          gamma: SamplingSet | None = None
                          ) -> ManifoldProblem:
    """First-order completion problem over flat Euclidean core blocks.

    The progress metric driving the threshold stopping rules is the
    relative training error, recoverable from the cost as
    sqrt(2 p f) / ||observed||.
    """
    kinds = [Euclidean(template.dims[k],
                       template.ranks[k] * template.ranks[k + 1])
             for k in range(template.d)]
    ref_train = float(np.linalg.norm(omega.values))
    if ref_train == 0:
        raise ValueError("reference values on the sampling set are all zero")
    extras = _error_metrics(omega, gamma)

    def as_cores(blocks) -> TrCores:
        return TrCores(template.dims, template.ranks, tuple(blocks))

    return ManifoldProblem(
        kinds=kinds,
        cost=lambda x: cost_and_residual(as_cores(x), omega)[0],
        partials=lambda x: euclidean_partials(as_cores(x), omega),
        metric_factors=lambda x: tr_metric_factors(as_cores(x), delta),
        extra_metrics=lambda x: extras(as_cores(x)),
        progress_metric=lambda x, cost: math.sqrt(max(2.0 * omega.rate * cost,
                                                      0.0)) / ref_train,
    )


def make_residual_problem(omega: SamplingSet, template: TrCores,
                          gamma: SamplingSet | None = None
                          ) -> ResidualProblem:
    """Gauss-Newton completion problem over the flattened cores."""
    sqrt_p = math.sqrt(omega.rate)
    ref_train = float(np.linalg.norm(omega.values))
    if ref_train == 0:
        raise ValueError("reference values on the sampling set are all zero")
    extras = _error_metrics(omega, gamma)

    def residual(flat: np.ndarray) -> np.ndarray:
        cores = template.with_flat(flat)
        return (tr_entries(cores, omega.indices) - omega.values) / sqrt_p

    def jacobian(flat: np.ndarray) -> np.ndarray:
        cores = template.with_flat(flat)
        return assemble_gn_system(cores, omega)[0]

    return ResidualProblem(
        residual=residual,
        jacobian=jacobian,
        extra_metrics=lambda flat: extras(template.with_flat(flat)),
        progress_metric=lambda flat, cost: math.sqrt(
            max(2.0 * omega.rate * cost, 0.0)) / ref_train,
    )
