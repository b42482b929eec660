"""Zero fill-in incomplete LU factorization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from ..blockmat import BlockMatrix
from ..errors import DimensionMismatch, ZeroPivot
from . import _kernels


@dataclass(frozen=True)
class ILU0Factor:
    """L (unit lower, strict part stored) and U packed on the pattern of A."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    diag: np.ndarray

    @property
    def n(self) -> int:
        return self.indptr.size - 1

    def _packed(self) -> sps.csr_matrix:
        return sps.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))

    @property
    def L(self) -> sps.csr_matrix:
        return (sps.tril(self._packed(), k=-1) + sps.identity(self.n)).tocsr()

    @property
    def U(self) -> sps.csr_matrix:
        return sps.triu(self._packed(), k=0).tocsr()

    @property
    def u_diagonal(self) -> np.ndarray:
        return self.data[self.diag]

    def solve(self, r):
        return ilu0_apply(self, r)


def ilu0_factor(A) -> ILU0Factor:
    """ILU(0) of a scalar CSR matrix or a :class:`BlockMatrix` (cell-wise order).

    Rows are eliminated in natural order. A zero pivot raises :class:`ZeroPivot`;
    no diagonal shift is attempted.
    """
    csr = A.csr if isinstance(A, BlockMatrix) else sps.csr_matrix(A)
    if csr.shape[0] != csr.shape[1]:
        raise DimensionMismatch("ILU(0) needs a square matrix")
    csr = csr.copy()
    csr.sort_indices()
    indptr = csr.indptr.astype(np.int64)
    indices = csr.indices.astype(np.int64)
    data = csr.data.astype(np.float64).copy()
    diag = _kernels.diagonal_pointers(indptr, indices)
    missing = np.flatnonzero(diag < 0)
    if missing.size:
        raise ZeroPivot(int(missing[0]))
    bad = _kernels.ilu0_inplace(indptr, indices, data, diag)
    if bad >= 0:
        raise ZeroPivot(int(bad))
    for arr in (indptr, indices, data, diag):
        arr.setflags(write=False)
    return ILU0Factor(indptr, indices, data, diag)


def ilu0_apply(F: ILU0Factor, r) -> np.ndarray:
    """Forward then backward substitution with the packed factors."""
    x = np.array(r, dtype=np.float64, copy=True)
    if x.shape != (F.n,):
        raise DimensionMismatch(f"vector length {x.shape} != {F.n}")
    _kernels.lu_solve_inplace(F.indptr, F.indices, F.data, F.diag, x)
    return x
