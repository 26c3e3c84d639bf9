"""Sparse structure/precision matrices for intrinsic and proper GMRF priors.

Every builder returns a :class:`PrecisionStructure`: a symmetric non-negative
definite sparse matrix together with its known rank deficiency and the linear
constraints (rows of ``A`` in ``Ax = 0``) that pin the improper directions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvalidInputError, UnsupportedSizeError
from .graphs import SiteGraph

DENSE_EIG_GUARD = 4096
RANK_TOL = 1e-8


@dataclass(frozen=True)
class PrecisionStructure:
    """Symmetric PSD sparse matrix with known rank deficiency and constraints.

    ``constraints`` is a (k, dim) dense array; each row ``a`` encodes a linear
    restriction ``a @ x = 0`` used downstream to condition intrinsic blocks.
    """

    dim: int
    entries: sp.csr_matrix
    rank_deficiency: int = 0
    constraints: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self):
        m = sp.csr_matrix(self.entries)
        if m.shape != (self.dim, self.dim):
            raise InvalidInputError(f"entries shape {m.shape} != ({self.dim}, {self.dim})")
        object.__setattr__(self, "entries", m)
        cons = np.asarray(self.constraints, dtype=float)
        if cons.size == 0:
            cons = np.zeros((0, self.dim))
        if cons.ndim != 2 or cons.shape[1] != self.dim:
            raise InvalidInputError(f"constraints shape {cons.shape} incompatible with dim {self.dim}")
        cons.setflags(write=False)
        object.__setattr__(self, "constraints", cons)

    @property
    def rank(self) -> int:
        return self.dim - self.rank_deficiency

    def toarray(self) -> np.ndarray:
        return self.entries.toarray()


def build_icar_structure(graph: SiteGraph) -> PrecisionStructure:
    """Intrinsic CAR structure: degree on the diagonal, -1 between neighbors.

    Rank deficiency is the number of connected components; each component
    contributes one sum-to-zero constraint.
    """
    n = graph.n_sites
    if n == 0:
        raise InvalidInputError("cannot build a spatial structure on an empty graph")
    rows, cols, vals = [], [], []
    deg = graph.degree_array()
    for i in range(n):
        rows.append(i)
        cols.append(i)
        vals.append(float(deg[i]))
    for a, b in graph.edges:
        rows.extend([a - 1, b - 1])
        cols.extend([b - 1, a - 1])
        vals.extend([-1.0, -1.0])
    entries = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    comps = graph.connected_components()
    cons = np.zeros((len(comps), n))
    for k, comp in enumerate(comps):
        for site in comp:
            cons[k, site - 1] = 1.0
    return PrecisionStructure(dim=n, entries=entries, rank_deficiency=len(comps), constraints=cons)


def build_iid_structure(n: int) -> PrecisionStructure:
    """Identity structure for exchangeable effects."""
    if n < 1:
        raise InvalidInputError(f"iid structure needs n >= 1, got {n}")
    return PrecisionStructure(dim=n, entries=sp.eye(n, format="csr"), rank_deficiency=0)


def build_seasonal_structure(T: int, p: int) -> PrecisionStructure:
    """Seasonal structure penalizing every sum of p consecutive effects.

    R = S'S with S the (T-p+1) x T sliding-window matrix of p consecutive
    ones.  The null space has dimension p-1; it is pinned by sum-to-zero
    constraints over seasonal phases 0..p-2 (the last phase is implied on
    the null space).
    """
    if p < 2 or p > T:
        raise InvalidInputError(f"season length must satisfy 2 <= p <= T, got p={p}, T={T}")
    nwin = T - p + 1
    rows, cols = [], []
    for w in range(nwin):
        rows.extend([w] * p)
        cols.extend(range(w, w + p))
    S = sp.csr_matrix((np.ones(nwin * p), (rows, cols)), shape=(nwin, T))
    R = (S.T @ S).tocsr()
    cons = np.zeros((p - 1, T))
    for k in range(p - 1):
        cons[k, np.arange(k, T, p)] = 1.0
    return PrecisionStructure(dim=T, entries=R, rank_deficiency=p - 1, constraints=cons)


def build_rw_structure(T: int, order: int) -> PrecisionStructure:
    """Random-walk structure R = D'D with D the order-th difference matrix."""
    if order not in (1, 2):
        raise InvalidInputError(f"random-walk order must be 1 or 2, got {order}")
    if T <= order:
        raise InvalidInputError(f"random walk of order {order} needs T > {order}, got T={T}")
    D = sp.eye(T, format="csc")
    for _ in range(order):
        rows = D.shape[0] - 1
        D = D[1:, :] - D[:-1, :]
        assert D.shape[0] == rows
    R = (D.T @ D).tocsr()
    if order == 1:
        cons = np.ones((1, T))
    else:
        t = np.arange(T, dtype=float)
        cons = np.vstack([np.ones(T), t - t.mean()])
    return PrecisionStructure(dim=T, entries=R, rank_deficiency=order, constraints=cons)


def kronecker(a: PrecisionStructure, b: PrecisionStructure) -> PrecisionStructure:
    """Kronecker product of two structures.

    The rank multiplies, so the deficiency of the product is
    dim_a*dim_b - rank_a*rank_b.  Constraints are not propagated; product
    structures are used for structural/rank checks, not as inference blocks.
    """
    dim = a.dim * b.dim
    deficiency = dim - a.rank * b.rank
    entries = sp.kron(a.entries, b.entries, format="csr")
    return PrecisionStructure(dim=dim, entries=entries, rank_deficiency=deficiency)


def numeric_rank(m: PrecisionStructure) -> int:
    """Count of eigenvalues above 1e-8 of the largest one (dense eigensolve)."""
    if m.dim > DENSE_EIG_GUARD:
        raise UnsupportedSizeError(
            f"numeric_rank uses a dense eigensolve; dim {m.dim} exceeds guard {DENSE_EIG_GUARD}"
        )
    eigs = np.linalg.eigvalsh(m.toarray())
    top = eigs.max(initial=0.0)
    if top <= 0.0:
        return 0
    return int(np.sum(eigs > RANK_TOL * top))
