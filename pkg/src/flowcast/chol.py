"""Sparse Cholesky factorization with a fill-reducing ordering.

Backed by SuperLU in symmetric mode (diagonal pivoting disabled), which for a
positive definite input yields A[perm][:, perm] = L L' with a minimum-degree
column ordering.  The factor keeps the SuperLU handle for fast solves but the
(permutation, lower_factor, log_det) triple is self-contained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu, spsolve_triangular

from .errors import InvalidInputError, NotPositiveDefiniteError
from .structures import PrecisionStructure


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor of a symmetrically permuted matrix.

    With P the permutation matrix built from ``permutation``
    (row i of P picks original index permutation[i]),
    P M P' = lower_factor @ lower_factor.T and log_det = log det M.
    """

    dim: int
    permutation: np.ndarray
    lower_factor: sp.csr_matrix
    log_det: float
    _splu: object = None

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve M x = rhs; rhs may be a vector or a (dim, k) matrix."""
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.dim:
            raise InvalidInputError(f"rhs has leading dimension {rhs.shape[0]}, expected {self.dim}")
        if self._splu is not None:
            return self._splu.solve(rhs)
        perm = self.permutation
        inv = np.empty_like(perm)
        inv[perm] = np.arange(self.dim)
        z = spsolve_triangular(self.lower_factor.tocsr(), rhs[perm], lower=True)
        y = spsolve_triangular(self.lower_factor.T.tocsr(), z, lower=False)
        return y[inv] if y.ndim == 1 else y[inv, :]


def _locate_bad_pivot(dense: np.ndarray) -> int | None:
    """Run a plain elimination to find the first non-positive pivot index."""
    a = dense.copy()
    n = a.shape[0]
    for k in range(n):
        if a[k, k] <= 0.0:
            return k
        a[k + 1 :, k + 1 :] -= np.outer(a[k + 1 :, k], a[k + 1 :, k]) / a[k, k]
    return None


def cholesky(m: PrecisionStructure, jitter: float = 0.0) -> CholeskyFactor:
    """Factor m + jitter*I, which must be positive definite."""
    a = (m.entries + jitter * sp.eye(m.dim)).tocsc() if jitter != 0.0 else m.entries.tocsc()
    return cholesky_matrix(a)


def cholesky_matrix(a: sp.spmatrix) -> CholeskyFactor:
    """Factor an explicit sparse symmetric positive definite matrix."""
    a = sp.csc_matrix(a)
    n = a.shape[0]
    if a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"matrix is not square: {a.shape}")
    try:
        lu = splu(a, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                  options=dict(SymmetricMode=True))
    except RuntimeError as exc:
        pivot = _locate_bad_pivot(a.toarray()) if n <= 2048 else None
        raise NotPositiveDefiniteError(
            f"sparse factorization failed ({exc}); matrix is singular or indefinite",
            pivot_index=pivot,
        ) from exc
    # splu convention: A[inv][:, inv] = L U with inv the inverse of perm_c,
    # so `inv` is the permutation under this factor's P M P' convention.
    inv = np.empty(n, dtype=int)
    inv[lu.perm_c] = np.arange(n)
    d = lu.U.diagonal()
    bad = np.where(d <= 0.0)[0]
    if bad.size:
        original = int(inv[bad[0]])
        raise NotPositiveDefiniteError(
            f"non-positive pivot {d[bad[0]]:.3e} at index {original}",
            pivot_index=original,
        )
    lower = (lu.L @ sp.diags(np.sqrt(d))).tocsr()
    log_det = float(np.sum(np.log(d)))
    return CholeskyFactor(dim=n, permutation=inv, lower_factor=lower, log_det=log_det, _splu=lu)


def solve(factor: CholeskyFactor, rhs: np.ndarray) -> np.ndarray:
    """Solve M x = rhs for the matrix the factor was built from."""
    return factor.solve(rhs)
