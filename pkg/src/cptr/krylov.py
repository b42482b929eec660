"""Right-preconditioned GMRES without restart."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .blockmat import BlockMatrix
from .errors import DimensionMismatch

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 500
#: reorthogonalize when the basis vector loses more than this share of its norm
REORTH_RATIO = 0.7


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    converged: bool
    #: relative (preconditioned) residual estimates, entry 0 is 1.0
    history: list = field(default_factory=list)
    true_residual: float = float("nan")
    wall_time: float = 0.0
    breakdown: bool = False
    #: estimate and true residual disagree by more than 10x tol
    residual_gap_flag: bool = False

    def write_history(self, path):
        """CSV with columns ``iter,prec_resid``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "prec_resid"])
            for k, v in enumerate(self.history):
                w.writerow([k, repr(float(v))])


def _as_operator(A):
    if isinstance(A, BlockMatrix):
        mat = A.csr
        return mat.shape[0], lambda v: mat @ v
    if callable(A) and not hasattr(A, "shape"):
        raise TypeError("operator callables must expose a shape; wrap them in scipy LinearOperator")
    return A.shape[0], lambda v: np.asarray(A @ v).ravel()


def _as_precond(M):
    if M is None:
        return lambda v: v.copy()
    if hasattr(M, "apply"):
        return M.apply
    if hasattr(M, "solve"):
        return M.solve
    if callable(M):
        return M
    return lambda v: np.asarray(M @ v).ravel()


def gmres(A, b, M=None, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SolveResult:
    """Solve ``A x = b`` with right preconditioning ``A M^{-1} (M x) = b``.

    ``A`` is a :class:`BlockMatrix`, a sparse/dense matrix or anything with
    ``shape`` and ``@``. ``M`` is ``None`` (identity), an object with
    ``apply``/``solve`` or a callable ``r -> M^{-1} r``. The initial guess is
    zero. Arnoldi uses modified Gram-Schmidt with one conditional
    reorthogonalization pass; the least-squares problem is updated by Givens
    rotations. Iteration stops when the relative residual estimate drops to
    ``tol`` *and* the true residual ``||b - A x|| / ||b||`` confirms it.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    t0 = time.perf_counter()
    n, matvec = _as_operator(A)
    prec = _as_precond(M)
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (n,):
        raise DimensionMismatch(f"rhs length {b.shape} != {n}")
    beta = float(np.linalg.norm(b))
    if beta == 0.0:
        return SolveResult(np.zeros(n), 0, True, [0.0], 0.0, time.perf_counter() - t0)

    m = min(max_iter, n) if max_iter > 0 else 0
    V = np.zeros((m + 1, n))
    H = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    V[0] = b / beta
    history = [1.0]
    x = np.zeros(n)
    true_rel = 1.0
    converged = breakdown = False
    k = 0

    def _solution(k):
        y = np.linalg.solve(np.triu(H[:k, :k]), g[:k]) if k else np.zeros(0)
        return prec(V[:k].T @ y)

    while k < m:
        w = matvec(prec(V[k]))
        norm0 = np.linalg.norm(w)
        for i in range(k + 1):
            h = V[i] @ w
            H[i, k] += h
            w -= h * V[i]
        hnext = np.linalg.norm(w)
        if hnext < REORTH_RATIO * norm0:
            for i in range(k + 1):
                h = V[i] @ w
                H[i, k] += h
                w -= h * V[i]
            hnext = np.linalg.norm(w)
        H[k + 1, k] = hnext
        for i in range(k):
            t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
            H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
            H[i, k] = t
        r = np.hypot(H[k, k], H[k + 1, k])
        if r == 0.0:
            breakdown = True
            break
        cs[k], sn[k] = H[k, k] / r, H[k + 1, k] / r
        H[k, k] = r
        H[k + 1, k] = 0.0
        g[k + 1] = -sn[k] * g[k]
        g[k] = cs[k] * g[k]
        k += 1
        est = abs(g[k]) / beta
        history.append(est)
        lucky = hnext <= 1e-14 * norm0
        if est <= tol or lucky:
            x = _solution(k)
            true_rel = float(np.linalg.norm(b - matvec(x)) / beta)
            if true_rel <= tol:
                converged = True
                break
            if lucky:
                breakdown = True
                break
        if k < m:
            V[k] = w / hnext
    else:
        x = _solution(k)
        true_rel = float(np.linalg.norm(b - matvec(x)) / beta)
        converged = true_rel <= tol

    if breakdown and not converged:
        x = _solution(k)
        true_rel = float(np.linalg.norm(b - matvec(x)) / beta)
        converged = true_rel <= tol
    gap = abs(true_rel - history[-1]) > 10 * tol
    return SolveResult(x, k, converged, history, true_rel, time.perf_counter() - t0, breakdown, gap)


def residual_check(A, b, x) -> float:
    """``||b - A x||_2 / ||b||_2`` on the original system."""
    _, matvec = _as_operator(A)
    b = np.asarray(b, dtype=np.float64)
    nb = np.linalg.norm(b)
    r = np.linalg.norm(b - matvec(np.asarray(x, dtype=np.float64)))
    return float(r / nb) if nb > 0 else float(r)
