"""Left scalings and multi-stage right preconditioners (CPR, CPTR, CPTR3).

Every method works on a scaled system ``Abar = N^{-1} A``, ``bbar = N^{-1} b``
where ``N^{-1}`` is lower block-triangular in the field partition and built
from cell-local (block-)diagonal approximations. Because those factors are
cell-local, ``N^{-1}`` is block-diagonal in cell-wise storage, so ``Abar``
keeps the block pattern of ``A`` and is formed exactly, remainder blocks
included. The right preconditioner then composes stage operators

    M^{-1} = M1 + M2 (I - Abar M1) + M3 (I - Abar M2)(I - Abar M1) ...

where the early stages act on a field scope (pressure, temperature or both)
and the last stage is ILU(0) of the whole scaled matrix.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .blockmat import (
    BlockMatrix,
    DiagonalApprox,
    block_diagonal_of,
    extract_submatrix,
    invert_diagonal,
)
from .errors import ConfigError, DimensionMismatch
from .subprec import amg_setup, direct_factor, ilu0_factor

FAMILIES = ("ilu0", "cpr", "cptr", "cptr3")
SUBSOLVERS = ("direct", "amg")


def parse_method(method: str):
    """Split ``"cpr-amg"`` into ``("cpr", "amg")``; ``"ilu0"`` maps to ``("ilu0", None)``."""
    m = re.fullmatch(r"(ilu0|cpr|cptr3|cptr)(?:-(direct|amg))?", method.strip().lower())
    if not m:
        raise ConfigError(f"unknown method {method!r}")
    family, sub = m.group(1), m.group(2)
    if family == "ilu0":
        return family, None
    if sub is None:
        raise ConfigError(f"method {method!r} needs a -direct or -amg suffix")
    if family == "cptr" and sub == "amg":
        raise ConfigError("cptr supports only the -direct sub-solver")
    return family, sub


@dataclass
class ScaledSystem:
    """Exactly scaled system plus the sub-blocks the right preconditioner needs."""

    A: BlockMatrix
    b: np.ndarray
    #: per-cell dense ``N^{-1}`` blocks (composite of all scalings)
    cell_scalings: list
    #: applied scaling steps, in order
    record: list = field(default_factory=list)
    #: named scalar sub-matrices such as ``B_PP``, ``B_ee``, ``C_TT``
    blocks: dict = field(default_factory=dict)

    @property
    def layout(self):
        return self.A.layout

    def scale_vector(self, v):
        """``N^{-1} v`` for any vector in the original row space."""
        v = np.asarray(v, dtype=np.float64)
        out = np.empty_like(v)
        lay = self.layout
        for c, Nc in enumerate(self.cell_scalings):
            sl = lay.cell_slice(c)
            out[sl] = Nc @ v[sl]
        return out

    def scaling_operator(self) -> sps.csr_matrix:
        """``N^{-1}`` as a block-diagonal scalar matrix (cell-wise order)."""
        return sps.block_diag(self.cell_scalings, format="csr")


def _identity_scalings(layout):
    return [np.eye(int(n)) for n in layout.block_sizes]


def _scaling_blocks(layout, tgt_fields, mid_fields, G: DiagonalApprox):
    """Per-cell ``I`` with ``-G_c`` placed at (tgt rows, mid cols)."""
    out = []
    for c, g in enumerate(G.blocks):
        n = int(layout.block_sizes[c])
        Nc = np.eye(n)
        ri = layout.local_indices(c, tgt_fields)
        ci = layout.local_indices(c, mid_fields)
        if ri.size and ci.size:
            Nc[np.ix_(ri, ci)] = -g
        out.append(Nc)
    return out


def apply_cell_scaling(A: BlockMatrix, b, scalings):
    """Left-multiply every block row of ``A`` (and ``b``) by its cell matrix."""
    data = A.csr.data.copy()
    lay = A.layout
    b = None if b is None else np.asarray(b, dtype=np.float64)
    bout = None if b is None else b.copy()
    indptr = A.csr.indptr
    for c, Nc in enumerate(scalings):
        sl = lay.cell_slice(c)
        _, vals = A.row_block(c)
        start = indptr[sl.start]
        data[start:start + vals.size] = (Nc @ vals).ravel()
        if b is not None:
            bout[sl] = Nc @ b[sl]
    return A.with_data(data), bout


def _elimination(A, tgt, mid, diag_mode, pivot_tolerance):
    """``D_{tgt,mid} D_{mid,mid}^{-1}`` per cell."""
    D_tm = block_diagonal_of(A, tgt, mid, mode=diag_mode)
    D_mm = block_diagonal_of(A, mid, mid, mode=diag_mode)
    return D_tm @ invert_diagonal(D_mm, pivot_tolerance), D_tm, D_mm


def left_scale_cpr(A: BlockMatrix, b, diag_mode: str = "block", pivot_tolerance=None) -> ScaledSystem:
    """Pressure decoupling: P rows ``-= D_Ph D_hh^{-1}`` times the ``h = {s, T}`` rows."""
    lay = A.layout
    h = ("s", "T") if lay.has_temperature else ("s",)
    if lay.indices(h).size == 0:
        S = ScaledSystem(A, np.array(b, dtype=np.float64), _identity_scalings(lay), ["cpr:none"])
    else:
        G, D_Ph, D_hh = _elimination(A, ("P",), h, diag_mode, pivot_tolerance)
        scal = _scaling_blocks(lay, ("P",), h, G)
        Abar, bbar = apply_cell_scaling(A, b, scal)
        S = ScaledSystem(Abar, bbar, scal, ["cpr:P<-h"])
        S.blocks.update(D_Ph=D_Ph, D_hh=D_hh)
    S.blocks["B_PP"] = extract_submatrix(S.A, "P", "P")
    return S


def left_scale_cptr(A: BlockMatrix, b, diag_mode: str = "block", pivot_tolerance=None) -> ScaledSystem:
    """Elliptic decoupling: ``e = {P, T}`` rows ``-= D_es D_ss^{-1}`` times the s rows."""
    lay = A.layout
    e = ("P", "T") if lay.has_temperature else ("P",)
    if lay.indices("s").size == 0:
        S = ScaledSystem(A, np.array(b, dtype=np.float64), _identity_scalings(lay), ["cptr:none"])
    else:
        G, D_es, D_ss = _elimination(A, e, ("s",), diag_mode, pivot_tolerance)
        scal = _scaling_blocks(lay, e, ("s",), G)
        Abar, bbar = apply_cell_scaling(A, b, scal)
        S = ScaledSystem(Abar, bbar, scal, ["cptr:e<-s"])
        S.blocks.update(D_es=D_es, D_ss=D_ss)
    S.blocks["B_ee"] = extract_submatrix(S.A, e, e)
    return S


def left_scale_cptr3(
    A: BlockMatrix, b, diag_mode: str = "block", pivot_tolerance=None, pp_source: str = "B"
) -> ScaledSystem:
    """Two sequential scalings: ``{P, T} <- s`` then ``T <- P``.

    ``pp_source`` selects the pressure pivot of the second scaling: the
    diagonal of the first-level ``B_PP`` (``"B"``, default) or of ``A_PP``
    (``"A"``).
    """
    if pp_source not in ("A", "B"):
        raise ValueError("pp_source must be 'A' or 'B'")
    lay = A.layout
    e = ("P", "T") if lay.has_temperature else ("P",)
    record = []
    if lay.indices("s").size:
        G1, D_es, D_ss = _elimination(A, e, ("s",), diag_mode, pivot_tolerance)
        N1 = _scaling_blocks(lay, e, ("s",), G1)
        Ahat, bhat = apply_cell_scaling(A, b, N1)
        record.append("cptr3:PT<-s")
        extra = dict(D_es=D_es, D_ss=D_ss)
    else:
        N1 = _identity_scalings(lay)
        Ahat, bhat = A, np.array(b, dtype=np.float64)
        extra = {}
    if lay.has_temperature:
        D_Tp = block_diagonal_of(Ahat, "T", "P", mode=diag_mode)
        D_PP = block_diagonal_of(Ahat if pp_source == "B" else A, "P", "P", mode=diag_mode)
        G2 = D_Tp @ invert_diagonal(D_PP, pivot_tolerance)
        N2 = _scaling_blocks(lay, ("T",), ("P",), G2)
        Abar, bbar = apply_cell_scaling(Ahat, bhat, N2)
        record.append("cptr3:T<-P")
        scal = [n2 @ n1 for n1, n2 in zip(N1, N2)]
        extra.update(D_Tp=D_Tp, D_PP=D_PP)
    else:
        Abar, bbar, scal = Ahat, bhat, N1
    S = ScaledSystem(Abar, bbar, scal, record or ["cptr3:none"], extra)
    S.blocks["B_PP"] = extract_submatrix(Abar, "P", "P")
    if lay.has_temperature:
        S.blocks["C_TT"] = extract_submatrix(Abar, "T", "T")
    return S


class _ZeroSolver:
    def solve(self, r):
        return np.zeros_like(r)


@dataclass
class Stage:
    """One stage: sub-solver acting on the unknowns in ``indices`` (``None`` = all)."""

    name: str
    solver: object
    scope: tuple | None = None
    indices: np.ndarray | None = None
    size: int = 0

    def apply(self, r):
        if self.indices is None:
            return self.solver.solve(r)
        out = np.zeros_like(r)
        if self.indices.size:
            out[self.indices] = self.solver.solve(r[self.indices])
        return out

    def dense_operator(self, n) -> np.ndarray:
        """Explicit ``n x n`` matrix of this stage (for small systems)."""
        return np.column_stack([self.apply(e) for e in np.eye(n)])


class StagePreconditioner:
    """Fixed linear operator ``r -> M^{-1} r`` composed from stages on ``Abar``."""

    def __init__(self, Abar: BlockMatrix, stages, method: str = ""):
        if not stages:
            raise ValueError("at least one stage required")
        self.A = Abar
        self.stages = list(stages)
        self.method = method
        self.setup_time = 0.0

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    @property
    def shape(self):
        return self.A.shape

    def apply(self, r):
        r = np.asarray(r, dtype=np.float64)
        if r.shape != (self.A.shape[0],):
            raise DimensionMismatch(f"vector length {r.shape} != {self.A.shape[0]}")
        if self.n_stages == 2:
            return apply_two_stage(self, r)
        if self.n_stages == 3:
            return apply_three_stage(self, r)
        return self._apply_general(r)

    __call__ = apply

    def _apply_general(self, r):
        y = np.zeros_like(r)
        z = r
        for k, st in enumerate(self.stages):
            x = st.apply(z)
            y += x
            if k + 1 < self.n_stages:
                z = z - self.A.csr @ x
        return y

    def describe(self) -> str:
        parts = [f"{s.name}[{'+'.join(s.scope) if s.scope else 'all'}:{s.size}]" for s in self.stages]
        return f"{self.method}: " + " -> ".join(parts)


def apply_two_stage(P: StagePreconditioner, r) -> np.ndarray:
    """``x = M1 r; z = r - Abar x; y = x + M2 z``."""
    if P.n_stages != 2:
        raise ValueError("two-stage application needs exactly 2 stages")
    M1, M2 = P.stages
    x = M1.apply(r)
    z = r - P.A.csr @ x
    return x + M2.apply(z)


def apply_three_stage(P: StagePreconditioner, r) -> np.ndarray:
    """``x = M1 r; z = r - Abar x; v = M2 z; u = z - Abar v; y = x + v + M3 u``."""
    if P.n_stages != 3:
        raise ValueError("three-stage application needs exactly 3 stages")
    M1, M2, M3 = P.stages
    x = M1.apply(r)
    z = r - P.A.csr @ x
    v = M2.apply(z)
    u = z - P.A.csr @ v
    return x + v + M3.apply(u)


def _sub_solver(B, kind: str, amg_options=None):
    if B.shape[0] == 0:
        return _ZeroSolver()
    if kind == "direct":
        return direct_factor(B)
    if kind == "amg":
        return amg_setup(B, **(amg_options or {}))
    raise ConfigError(f"unknown sub-solver {kind!r}")


def _scoped_stage(name, S: ScaledSystem, block_name, fields, kind, amg_options=None):
    idx = S.layout.indices(fields) if np.isin(S.layout.tags, fields).any() else np.zeros(0, dtype=np.int64)
    if idx.size == 0:
        return Stage(name, _ZeroSolver(), tuple(fields), idx, 0)
    return Stage(name, _sub_solver(S.blocks[block_name], kind, amg_options), tuple(fields), idx, idx.size)


def _ilu_stage(S: ScaledSystem):
    return Stage("ilu0", ilu0_factor(S.A), None, None, S.A.shape[0])


def build_ilu0(A: BlockMatrix) -> StagePreconditioner:
    """Single-stage ILU(0) baseline on the unscaled matrix."""
    return StagePreconditioner(A, [Stage("ilu0", ilu0_factor(A), None, None, A.shape[0])], "ilu0")


def build_cpr(S: ScaledSystem, pressure_solver: str = "amg", amg_options=None) -> StagePreconditioner:
    """Stage 1: ``B_PP`` solve on the P scope; stage 2: ILU(0) of ``Abar``."""
    st1 = _scoped_stage("B_PP", S, "B_PP", ("P",), pressure_solver, amg_options)
    return StagePreconditioner(S.A, [st1, _ilu_stage(S)], f"cpr-{pressure_solver}")


def build_cptr(S: ScaledSystem, ee_solver: str = "direct") -> StagePreconditioner:
    """Stage 1: monolithic ``B_ee`` solve on the {P, T} scope; stage 2: ILU(0)."""
    if ee_solver != "direct":
        raise ConfigError("cptr supports only the direct elliptic solver")
    e = ("P", "T") if S.layout.has_temperature else ("P",)
    st1 = _scoped_stage("B_ee", S, "B_ee", e, "direct")
    return StagePreconditioner(S.A, [st1, _ilu_stage(S)], "cptr-direct")


def build_cptr3(S: ScaledSystem, sub_solver: str = "amg", amg_options=None) -> StagePreconditioner:
    """Stage 1: ``C_TT`` on T; stage 2: ``B_PP`` on P; stage 3: ILU(0) of ``Abar``."""
    st1 = _scoped_stage("C_TT", S, "C_TT", ("T",), sub_solver, amg_options)
    st2 = _scoped_stage("B_PP", S, "B_PP", ("P",), sub_solver, amg_options)
    return StagePreconditioner(S.A, [st1, st2, _ilu_stage(S)], f"cptr3-{sub_solver}")


def left_scale(method: str, A: BlockMatrix, b, **kw) -> ScaledSystem:
    family, _ = parse_method(method)
    if family == "ilu0":
        return ScaledSystem(A, np.array(b, dtype=np.float64), _identity_scalings(A.layout), ["ilu0:none"])
    return {"cpr": left_scale_cpr, "cptr": left_scale_cptr, "cptr3": left_scale_cptr3}[family](A, b, **kw)


def build_preconditioner(method: str, S: ScaledSystem, amg_options=None) -> StagePreconditioner:
    family, sub = parse_method(method)
    if family == "ilu0":
        return build_ilu0(S.A)
    if family == "cpr":
        return build_cpr(S, sub, amg_options)
    if family == "cptr":
        return build_cptr(S, sub)
    return build_cptr3(S, sub, amg_options)


# -- spectral diagnostic -------------------------------------------------------

@dataclass
class SpectrumSummary:
    dimension: int
    mode: str
    eigenvalues: np.ndarray | None
    n_positive: int | None
    n_negative: int | None
    n_zero: int | None
    real_min: float
    real_max: float
    sym_min: float
    sym_max: float
    verdict: str
    converged: bool = True
    message: str = ""

    def counts(self):
        return {"pos": self.n_positive, "neg": self.n_negative, "zero": self.n_zero}


def _verdict(lo, hi, tol):
    if hi < -tol:
        return "negative-definite"
    if lo > tol:
        return "positive-definite"
    if hi <= tol and lo < -tol:
        return "negative-semidefinite"
    if lo >= -tol and hi > tol:
        return "positive-semidefinite"
    if abs(lo) <= tol and abs(hi) <= tol:
        return "zero"
    return "indefinite"


def spectral_diagnostic(B, mode: str = "full_dense", zero_rtol: float = 1e-12) -> SpectrumSummary:
    """Eigenvalue sign counts of ``B`` and definiteness of ``(B + B^T) / 2``.

    ``full_dense`` computes every eigenvalue (dimension up to 20,000);
    ``extremal`` estimates extreme real parts with ARPACK, reporting
    non-convergence instead of raising. In extremal mode, sign counts are
    only known when the spectrum lies in one half-plane.
    """
    B = sps.csr_matrix(B, dtype=np.float64)
    n = B.shape[0]
    if B.shape[0] != B.shape[1]:
        raise DimensionMismatch("spectral diagnostic needs a square matrix")
    Hs = ((B + B.T) * 0.5).tocsr()
    if mode == "full_dense":
        if n > 20000:
            raise ValueError("full_dense mode is limited to dimension 20,000")
        dense = B.toarray()
        ev = np.linalg.eigvals(dense)
        sev = np.linalg.eigvalsh(Hs.toarray())
        tol = zero_rtol * max(np.abs(ev).max(initial=0.0), 1e-300)
        re = ev.real
        npos, nneg = int(np.sum(re > tol)), int(np.sum(re < -tol))
        stol = zero_rtol * max(np.abs(sev).max(initial=0.0), 1e-300)
        order = np.lexsort((ev.imag, ev.real))
        return SpectrumSummary(
            n, mode, ev[order], npos, nneg, n - npos - nneg,
            float(re.min()), float(re.max()), float(sev.min()), float(sev.max()),
            _verdict(sev.min(), sev.max(), stol),
        )
    if mode != "extremal":
        raise ValueError(f"unknown mode {mode!r}")
    converged, msg = True, ""
    try:
        lr = spla.eigs(B, k=1, which="LR", return_eigenvectors=False, maxiter=5000).real[0]
        sr = spla.eigs(B, k=1, which="SR", return_eigenvectors=False, maxiter=5000).real[0]
        la = spla.eigsh(Hs, k=1, which="LA", return_eigenvectors=False, maxiter=5000)[0]
        sa = spla.eigsh(Hs, k=1, which="SA", return_eigenvectors=False, maxiter=5000)[0]
    except spla.ArpackNoConvergence as exc:
        nan = float("nan")
        return SpectrumSummary(n, mode, None, None, None, None, nan, nan, nan, nan, "unknown", False, str(exc))
    tol = zero_rtol * max(abs(lr), abs(sr), 1e-300)
    if sr > tol:
        counts = (n, 0, 0)
    elif lr < -tol:
        counts = (0, n, 0)
    else:
        counts = (None, None, None)
        msg = "mixed-sign spectrum: counts need full_dense mode"
    stol = zero_rtol * max(abs(la), abs(sa), 1e-300)
    return SpectrumSummary(n, mode, None, *counts, float(sr), float(lr), float(sa), float(la),
                           _verdict(sa, la, stol), converged, msg)
