"""Riemannian optimization on product manifolds with preconditioned metrics.

The library couples a small product-manifold toolkit (geometry, solvers)
with per-block scaled metrics whose factors approximate diagonal blocks of
the cost Hessian, plus three worked applications: canonical correlation
analysis, truncated SVD and tensor-ring completion, together with
closed-form and numerical condition-number diagnostics.
"""

from . import (cca, config, ellipsoid, fileio, geometry, linalg, report,
               solvers, spectrum, trcomp, tsvd)

__version__ = "0.1.0"

__all__ = [
    "cca",
    "config",
    "ellipsoid",
    "fileio",
    "geometry",
    "linalg",
    "report",
    "solvers",
    "spectrum",
    "trcomp",
    "tsvd",
    "__version__",
]
