"""Direct solves used for the "exact" sub-systems and AMG coarse grids."""
from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from ..errors import DimensionMismatch

#: Above this dimension :func:`direct_factor` switches to sparse LU.
DENSE_LIMIT = 6000


class DenseFactor:
    """LAPACK LU with partial pivoting of a (sparse or dense) square matrix."""

    def __init__(self, A):
        dense = A.toarray() if sps.issparse(A) else np.array(A, dtype=np.float64)
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise DimensionMismatch(f"matrix of shape {dense.shape} is not square")
        self.n = dense.shape[0]
        self._scale = np.abs(dense).max() if dense.size else 0.0
        if self.n and (self._scale == 0.0 or not np.all(np.isfinite(dense))):
            raise np.linalg.LinAlgError("singular matrix")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            self.lu, self.piv = sla.lu_factor(dense, check_finite=False)
        if self.n and np.any(np.abs(np.diag(self.lu)) <= 1e-14 * self._scale):
            raise np.linalg.LinAlgError("singular matrix")

    def solve(self, r):
        r = np.asarray(r, dtype=np.float64)
        if r.shape[0] != self.n:
            raise DimensionMismatch(f"vector length {r.shape[0]} != {self.n}")
        if self.n == 0:
            return r.copy()
        return sla.lu_solve((self.lu, self.piv), r, check_finite=False)

    def factors(self):
        """Permutation matrix P, unit lower L and upper U with ``P @ A == L @ U``."""
        n = self.n
        L = np.tril(self.lu, -1) + np.eye(n)
        U = np.triu(self.lu)
        perm = np.arange(n)
        for i, p in enumerate(self.piv):
            perm[i], perm[p] = perm[p], perm[i]
        return np.eye(n)[perm], L, U


class SparseLUFactor:
    """SuperLU factorization for sub-systems too large for dense storage."""

    def __init__(self, A):
        A = sps.csc_matrix(A)
        self.n = A.shape[0]
        self._lu = spla.splu(A)

    def solve(self, r):
        r = np.asarray(r, dtype=np.float64)
        if r.shape[0] != self.n:
            raise DimensionMismatch(f"vector length {r.shape[0]} != {self.n}")
        return self._lu.solve(r)


def dense_factor(A) -> DenseFactor:
    return DenseFactor(A)


def direct_factor(A, dense_limit: int = DENSE_LIMIT):
    """Dense LU up to ``dense_limit`` unknowns, sparse LU beyond."""
    if A.shape[0] <= dense_limit:
        return DenseFactor(A)
    return SparseLUFactor(A)


def dense_solve(F, r) -> np.ndarray:
    return F.solve(r)
