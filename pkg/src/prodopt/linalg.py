"""Dense matrix kernels shared by every other module.

All routines operate on float64 numpy arrays and are deterministic for a
fixed input: QR and eigen-based factorizations carry explicit sign
conventions so repeated calls give bitwise-identical results.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

__all__ = [
    "sym",
    "qf",
    "chol",
    "sym_eig",
    "precond_factor",
    "lyap_solve",
    "lyap_solve_spd",
    "svd_thin",
    "solve_spd",
    "spd_sqrt",
    "spd_inv_sqrt",
]

# Relative tolerance accepted on inputs declared symmetric; they are
# symmetrized before any decomposition to absorb floating-point drift.
SYMMETRY_RTOL = 1e-10


def sym(a: np.ndarray) -> np.ndarray:
    """Symmetric part (A + A^T) / 2."""
    return 0.5 * (a + a.T)


def _check_finite(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def _check_symmetric(s: np.ndarray, rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    """Validate approximate symmetry and return the symmetrized matrix."""
    s = _check_finite(s)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {s.shape}")
    scale = np.linalg.norm(s)
    if scale > 0 and np.linalg.norm(s - s.T) > rtol * max(scale, 1.0):
        raise ValueError("matrix is not symmetric within tolerance")
    return sym(s)


def qf(a: np.ndarray) -> np.ndarray:
    """Q factor of the thin QR factorization with positive R diagonal.

    The sign convention (diag(R) > 0) makes the map a function of A, which
    keeps retraction-based iterations reproducible.  Raises on
    rank-deficient input.
    """
    a = _check_finite(a)
    if a.ndim != 2 or a.shape[0] < a.shape[1]:
        raise ValueError(f"qf expects rows >= cols, got shape {a.shape}")
    q, r = np.linalg.qr(a)
    d = np.abs(np.diag(r))
    if np.any(d < 1e-13 * max(np.linalg.norm(a), 1e-300)):
        raise ValueError("rank deficient in qf")
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def chol(s: np.ndarray) -> np.ndarray:
    """Upper-triangular R with R^T R = S for symmetric positive definite S."""
    s = _check_symmetric(s)
    try:
        lower = np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise ValueError("matrix not positive definite") from exc
    return lower.T


def sym_eig(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns (eigenvalues ascending, orthonormal eigenvectors as columns)
    with Q diag(w) Q^T = S.  Input must be symmetric to the module
    tolerance; it is symmetrized before factorization.
    """
    s = _check_symmetric(s)
    w, q = np.linalg.eigh(s)
    return w, q


def precond_factor(m_bar: np.ndarray, delta: float) -> np.ndarray:
    """SPD factor (sym(M)^2 + delta*I)^(1/2) used by the scaled metrics.

    delta > 0 guarantees positive definiteness even when sym(M) is
    singular; delta = 0 is permitted and then requires sym(M) nonsingular
    only if the caller needs an SPD result.
    """
    m_bar = _check_finite(m_bar)
    if m_bar.ndim != 2 or m_bar.shape[0] != m_bar.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m_bar.shape}")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    w, q = np.linalg.eigh(sym(m_bar))
    return (q * np.sqrt(w * w + delta)) @ q.T


def lyap_solve(m: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Solve M^{-1} S + S M^{-1} = C for symmetric S, with M SPD.

    Diagonalizes M^{-1} = Q diag(d) Q^T and divides entrywise by d_i + d_j
    in that basis; uniqueness follows from d_i > 0.
    """
    w, q = sym_eig(m)
    if np.any(w <= 0):
        raise ValueError("matrix not positive definite")
    c = _check_symmetric(c)
    if c.shape != m.shape:
        raise ValueError("shape mismatch between M and C")
    d = 1.0 / w
    c_tilde = q.T @ c @ q
    s_tilde = c_tilde / (d[:, None] + d[None, :])
    return sym(q @ s_tilde @ q.T)


def lyap_solve_spd(a: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Solve A S + S A = C for symmetric S, with A SPD given directly."""
    w, q = sym_eig(a)
    if np.any(w <= 0):
        raise ValueError("matrix not positive definite")
    c = _check_symmetric(c)
    c_tilde = q.T @ c @ q
    s_tilde = c_tilde / (w[:, None] + w[None, :])
    return sym(q @ s_tilde @ q.T)


def svd_thin(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD: U diag(s) V^T = A with s sorted descending."""
    a = _check_finite(a)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return u, s, vt.T


def solve_spd(s: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve S X = B with S symmetric positive definite (Cholesky)."""
    s = _check_symmetric(s)
    try:
        c, low = scipy.linalg.cho_factor(s, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise ValueError("matrix not positive definite") from exc
    return scipy.linalg.cho_solve((c, low), np.asarray(b, dtype=float),
                                  check_finite=False)


def spd_sqrt(s: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Symmetric square root of an SPD matrix via eigendecomposition."""
    w, q = sym_eig(s)
    if np.any(w <= floor):
        raise ValueError("matrix not positive definite")
    return (q * np.sqrt(w)) @ q.T


def spd_inv_sqrt(s: np.ndarray, floor: float = 1e-14) -> np.ndarray:
    """Symmetric inverse square root of an SPD matrix.

    Eigenvalues are checked against `floor` so near-singular inputs fail
    loudly instead of amplifying noise.
    """
    w, q = sym_eig(s)
    if np.any(w <= floor):
        raise ValueError("matrix not positive definite")
    return (q / np.sqrt(w)) @ q.T
