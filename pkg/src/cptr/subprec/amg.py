"""Classical (Ruge-Stueben) algebraic multigrid.

Setup: strength of connection on negative off-diagonal couplings, two-pass
C/F splitting, direct interpolation from strong C-neighbours and Galerkin
coarse operators ``R A P`` with ``R = P^T``. Apply: a single V-cycle with one
symmetric Gauss-Seidel sweep before and after the coarse correction and an LU
solve on the coarsest level.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from ..errors import DimensionMismatch, SetupFailure
from . import _kernels
from .direct import direct_factor


@dataclass
class AMGParams:
    strength_threshold: float = 0.25
    max_coarse_size: int = 1000
    max_levels: int = 25
    #: a level must shrink by at least this fraction
    min_coarsening: float = 0.05


@dataclass
class AMGLevel:
    A: sps.csr_matrix
    P: sps.csr_matrix | None = None
    R: sps.csr_matrix | None = None
    splitting: np.ndarray | None = None
    _diag: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.A = sps.csr_matrix(self.A)
        self.A.sort_indices()
        self._indptr = self.A.indptr.astype(np.int64)
        self._indices = self.A.indices.astype(np.int64)
        self._data = self.A.data.astype(np.float64)
        self._diag = _kernels.diagonal_pointers(self._indptr, self._indices)

    def smooth(self, x, b):
        _kernels.symmetric_gauss_seidel(self._indptr, self._indices, self._data, self._diag, x, b)


class AMGHierarchy:
    """Levels from fine (index 0) to coarsest, plus the coarse LU factor."""

    def __init__(self, levels, coarse_solver, params: AMGParams):
        self.levels = levels
        self.coarse_solver = coarse_solver
        self.params = params

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def sizes(self):
        return [lvl.A.shape[0] for lvl in self.levels]

    def operator_complexity(self) -> float:
        nnz = [lvl.A.nnz for lvl in self.levels]
        return sum(nnz) / nnz[0]

    def grid_complexity(self) -> float:
        s = self.sizes
        return sum(s) / s[0]

    def solve(self, r):
        return amg_apply(self, r)

    def summary(self) -> str:
        """Plain-text dump of level sizes and complexities."""
        lines = [
            "AMG hierarchy",
            f"  levels: {self.n_levels}",
            f"  strength threshold: {self.params.strength_threshold}",
            f"  max coarse size: {self.params.max_coarse_size}",
            f"  operator complexity: {self.operator_complexity():.4f}",
            f"  grid complexity: {self.grid_complexity():.4f}",
            "  level  unknowns  nonzeros",
        ]
        for k, lvl in enumerate(self.levels):
            lines.append(f"  {k:5d}  {lvl.A.shape[0]:8d}  {lvl.A.nnz:8d}")
        return "\n".join(lines) + "\n"


def strength_of_connection(A: sps.csr_matrix, theta: float = 0.25) -> sps.csr_matrix:
    """``S[i, j] = 1`` when ``-a_ij >= theta * max_k(-a_ik)`` (off-diagonal, ``a_ij < 0``)."""
    A = sps.csr_matrix(A)
    n = A.shape[0]
    rows = np.repeat(np.arange(n), np.diff(A.indptr))
    cols = A.indices
    neg = np.where(cols != rows, -A.data, 0.0)
    rowmax = np.zeros(n)
    np.maximum.at(rowmax, rows, neg)
    mask = (neg > 0.0) & (neg >= theta * rowmax[rows])
    S = sps.csr_matrix((np.ones(mask.sum()), (rows[mask], cols[mask])), shape=(n, n))
    S.sort_indices()
    return S


def rs_splitting(S: sps.csr_matrix, second_pass: bool = True) -> np.ndarray:
    """Boolean C-point marker from the Ruge-Stueben two-pass algorithm.

    Ties in the first pass are broken by the lowest index.
    """
    n = S.shape[0]
    S = sps.csr_matrix(S)
    ST = S.T.tocsr()
    ST.sort_indices()
    s_ptr, s_idx = S.indptr, S.indices
    t_ptr, t_idx = ST.indptr, ST.indices
    U, C, F = 0, 1, 2
    state = np.zeros(n, dtype=np.int8)
    lam = np.diff(t_ptr).astype(np.int64)
    heap = [(-int(lam[i]), i) for i in range(n)]
    heapq.heapify(heap)
    while heap:
        negl, i = heapq.heappop(heap)
        if state[i] != U or -negl != lam[i]:
            continue
        if lam[i] == 0:
            # influences nobody (isolated or only depends on F points)
            state[i] = F
            continue
        state[i] = C
        for j in t_idx[t_ptr[i]:t_ptr[i + 1]]:
            if state[j] == U:
                state[j] = F
                for k in s_idx[s_ptr[j]:s_ptr[j + 1]]:
                    if state[k] == U:
                        lam[k] += 1
                        heapq.heappush(heap, (-int(lam[k]), int(k)))
        for k in s_idx[s_ptr[i]:s_ptr[i + 1]]:
            if state[k] == U:
                lam[k] -= 1
                heapq.heappush(heap, (-int(lam[k]), int(k)))
    state[state == U] = F

    if second_pass:
        # every strong F-F pair must share a strong C point
        for i in range(n):
            if state[i] != F:
                continue
            strong = s_idx[s_ptr[i]:s_ptr[i + 1]]
            ci = set(int(k) for k in strong if state[k] == C)
            tentative = -1
            for j in strong:
                if state[j] != F:
                    continue
                sj = s_idx[s_ptr[j]:s_ptr[j + 1]]
                if any(int(k) in ci for k in sj):
                    continue
                if tentative >= 0:
                    state[tentative] = F
                    state[i] = C
                    break
                tentative = int(j)
                state[j] = C
                ci.add(tentative)
    return state == C


def direct_interpolation(A: sps.csr_matrix, S: sps.csr_matrix, is_c: np.ndarray) -> sps.csr_matrix:
    n = A.shape[0]
    coarse_index = np.cumsum(is_c) - 1
    nc = int(is_c.sum())
    rows, cols, vals = _kernels.direct_interpolation(
        A.indptr.astype(np.int64), A.indices.astype(np.int64), A.data.astype(np.float64),
        S.indptr.astype(np.int64), S.indices.astype(np.int64), is_c.astype(np.bool_),
        coarse_index.astype(np.int64),
    )
    P = sps.csr_matrix((vals, (rows, cols)), shape=(n, nc))
    P.sort_indices()
    return P


def amg_setup(A, strength_threshold: float = 0.25, max_coarse_size: int = 1000, max_levels: int = 25) -> AMGHierarchy:
    """Build a classical AMG hierarchy for a square sparse matrix.

    Raises :class:`SetupFailure` if a level shrinks by less than 5%.
    """
    params = AMGParams(strength_threshold, max_coarse_size, max_levels)
    A = sps.csr_matrix(A, dtype=np.float64)
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch("AMG needs a square matrix")
    levels = [AMGLevel(A)]
    while levels[-1].A.shape[0] > max_coarse_size and len(levels) < max_levels:
        lvl = levels[-1]
        n = lvl.A.shape[0]
        S = strength_of_connection(lvl.A, strength_threshold)
        is_c = rs_splitting(S)
        nc = int(is_c.sum())
        if nc == 0:
            break
        if nc > (1.0 - params.min_coarsening) * n:
            raise SetupFailure(f"coarsening stagnated at level {len(levels) - 1}: {n} -> {nc}")
        P = direct_interpolation(lvl.A, S, is_c)
        R = P.T.tocsr()
        Ac = (R @ lvl.A @ P).tocsr()
        Ac.sum_duplicates()
        lvl.P, lvl.R, lvl.splitting = P, R, is_c
        levels.append(AMGLevel(Ac))
    try:
        coarse = direct_factor(levels[-1].A)
    except np.linalg.LinAlgError as exc:
        raise SetupFailure(f"coarse-grid factorization failed: {exc}") from exc
    return AMGHierarchy(levels, coarse, params)


def amg_apply(H: AMGHierarchy, r) -> np.ndarray:
    """One V-cycle from a zero initial guess."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (H.levels[0].A.shape[0],):
        raise DimensionMismatch(f"vector length {r.shape} != {H.levels[0].A.shape[0]}")
    return _vcycle(H, 0, r)


def _vcycle(H: AMGHierarchy, k: int, b: np.ndarray) -> np.ndarray:
    lvl = H.levels[k]
    if k == H.n_levels - 1:
        return H.coarse_solver.solve(b)
    x = np.zeros_like(b)
    lvl.smooth(x, b)
    res = b - lvl.A @ x
    x += lvl.P @ _vcycle(H, k + 1, lvl.R @ res)
    lvl.smooth(x, b)
    return x
