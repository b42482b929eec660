"""Compiled CSR loops (ILU(0), triangular solves, Gauss-Seidel, interpolation)."""
import numpy as np
from numba import njit


@njit(cache=True)
def diagonal_pointers(indptr, indices):
    n = indptr.size - 1
    out = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for kk in range(indptr[i], indptr[i + 1]):
            if indices[kk] == i:
                out[i] = kk
                break
    return out


@njit(cache=True)
def ilu0_inplace(indptr, indices, data, diag):
    """IKJ ILU(0) on sorted CSR; returns the first bad pivot row or -1."""
    n = indptr.size - 1
    pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for kk in range(indptr[i], indptr[i + 1]):
            pos[indices[kk]] = kk
        for kk in range(indptr[i], diag[i]):
            k = indices[kk]
            lik = data[kk] / data[diag[k]]
            data[kk] = lik
            for jj in range(diag[k] + 1, indptr[k + 1]):
                p = pos[indices[jj]]
                if p >= 0:
                    data[p] -= lik * data[jj]
        for kk in range(indptr[i], indptr[i + 1]):
            pos[indices[kk]] = -1
        d = data[diag[i]]
        if d == 0.0 or not np.isfinite(d):
            return i
    return -1


@njit(cache=True)
def lu_solve_inplace(indptr, indices, data, diag, x):
    n = indptr.size - 1
    for i in range(n):
        s = x[i]
        for kk in range(indptr[i], diag[i]):
            s -= data[kk] * x[indices[kk]]
        x[i] = s
    for i in range(n - 1, -1, -1):
        s = x[i]
        for kk in range(diag[i] + 1, indptr[i + 1]):
            s -= data[kk] * x[indices[kk]]
        x[i] = s / data[diag[i]]


@njit(cache=True)
def symmetric_gauss_seidel(indptr, indices, data, diag, x, b):
    """One forward then one backward sweep, in place on ``x``."""
    n = indptr.size - 1
    for i in range(n):
        if diag[i] < 0:
            continue
        s = b[i]
        for kk in range(indptr[i], indptr[i + 1]):
            j = indices[kk]
            if j != i:
                s -= data[kk] * x[j]
        d = data[diag[i]]
        if d != 0.0:
            x[i] = s / d
    for i in range(n - 1, -1, -1):
        if diag[i] < 0:
            continue
        s = b[i]
        for kk in range(indptr[i], indptr[i + 1]):
            j = indices[kk]
            if j != i:
                s -= data[kk] * x[j]
        d = data[diag[i]]
        if d != 0.0:
            x[i] = s / d


@njit(cache=True)
def direct_interpolation(indptr, indices, data, s_indptr, s_indices, is_c, coarse_index):
    """Classical direct interpolation weights; returns COO triplets."""
    n = indptr.size - 1
    cap = 0
    for i in range(n):
        if is_c[i]:
            cap += 1
        else:
            cap += s_indptr[i + 1] - s_indptr[i]
    rows = np.empty(cap, dtype=np.int64)
    cols = np.empty(cap, dtype=np.int64)
    vals = np.empty(cap, dtype=np.float64)
    strong_c = np.zeros(n, dtype=np.bool_)
    m = 0
    for i in range(n):
        if is_c[i]:
            rows[m] = i
            cols[m] = coarse_index[i]
            vals[m] = 1.0
            m += 1
            continue
        for kk in range(s_indptr[i], s_indptr[i + 1]):
            j = s_indices[kk]
            if is_c[j]:
                strong_c[j] = True
        diag = 0.0
        neg_all = 0.0
        pos_all = 0.0
        neg_c = 0.0
        pos_c = 0.0
        for kk in range(indptr[i], indptr[i + 1]):
            j = indices[kk]
            a = data[kk]
            if j == i:
                diag += a
            elif a < 0.0:
                neg_all += a
                if strong_c[j]:
                    neg_c += a
            else:
                pos_all += a
                if strong_c[j]:
                    pos_c += a
        if pos_c == 0.0:
            diag += pos_all
        alpha = neg_all / neg_c if neg_c != 0.0 else 0.0
        beta = pos_all / pos_c if pos_c != 0.0 else 0.0
        if diag != 0.0:
            for kk in range(indptr[i], indptr[i + 1]):
                j = indices[kk]
                if j == i or not strong_c[j]:
                    continue
                a = data[kk]
                w = -alpha * a / diag if a < 0.0 else -beta * a / diag
                rows[m] = i
                cols[m] = coarse_index[j]
                vals[m] = w
                m += 1
        for kk in range(s_indptr[i], s_indptr[i + 1]):
            strong_c[s_indices[kk]] = False
    return rows[:m], cols[:m], vals[:m]
