"""Primary/secondary variable sets per phase state and static condensation.

Each cell carries ``n_c + n_s + 1`` primary unknowns and a state-dependent
number of secondary unknowns. Secondary equations (phase equilibrium and
closure relations) involve only unknowns of their own cell, so the secondary
block ``J22`` is block-diagonal and can be eliminated exactly:

    A = J11 - J12 J22^{-1} J21,    b = -r1 + J12 J22^{-1} r2.

Component roles: 1 is the light (nitrogen-like) gas, 2 the heaviest
hydrocarbon, 3 water; 4..n_c are the remaining hydrocarbons.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

from .blockmat import BlockMatrix, FieldLayout, assemble, invert_block
from .errors import DimensionMismatch, SingularBlock, SingularSecondaryBlock, UnsupportedState


class CellState(enum.Enum):
    G = "G"
    OG = "OG"
    OWG = "OWG"


def classify_cell(has_oil: bool, has_water: bool, has_gas: bool) -> CellState:
    if not has_gas:
        raise UnsupportedState("cells without a gas phase are not supported")
    if has_water and not has_oil:
        raise UnsupportedState("water without oil is not a supported phase state")
    if has_oil and has_water:
        return CellState.OWG
    return CellState.OG if has_oil else CellState.G


@dataclass(frozen=True)
class VariablePartition:
    """Ordered unknown labels and the equations aligned with them.

    ``primary_eqs[i]`` is aligned with ``primary[i]`` (and likewise for the
    secondary lists), i.e. it occupies the diagonal position of that unknown.
    """

    state: CellState
    n_c: int
    n_s: int
    primary: tuple
    secondary: tuple
    primary_eqs: tuple
    secondary_eqs: tuple

    @property
    def n_primary(self) -> int:
        return len(self.primary)

    @property
    def n_secondary(self) -> int:
        return len(self.secondary)

    @property
    def unknowns(self) -> tuple:
        return self.primary + self.secondary

    @property
    def equations(self) -> tuple:
        return self.primary_eqs + self.secondary_eqs

    def primary_tags(self) -> list:
        """Field tag of every primary unknown (``P``, ``T`` or ``s``)."""
        return [lbl if lbl in ("P", "T") else "s" for lbl in self.primary]

    def swapped(self, a: str, b: str) -> "VariablePartition":
        """Exchange two unknown labels between (or within) the sets, keeping equations fixed."""
        def sw(seq):
            return tuple(b if x == a else a if x == b else x for x in seq)
        return replace(self, primary=sw(self.primary), secondary=sw(self.secondary))


def _rng(a, b):
    return list(range(a, b + 1))


def ordering_for(state: CellState, n_c: int = 12, n_s: int = 1) -> VariablePartition:
    """Primary and secondary unknown ordering with its equation alignment."""
    if n_c < 3:
        raise ValueError("n_c must be at least 3")
    if n_s < 0:
        raise ValueError("n_s must be non-negative")
    state = CellState(state)
    y = lambda i: f"y{i}"  # noqa: E731
    x = lambda i: f"x{i}"  # noqa: E731
    m = lambda i: f"m{i}"  # noqa: E731
    f = lambda i: f"f{i}"  # noqa: E731
    heavy = range(4, n_c + 1)
    if state is CellState.G:
        prim = ["P"] + [y(i) for i in _rng(2, n_c)]
        peqs = [m(i) for i in _rng(1, n_c)]
        sec, seqs = [y(1)], ["sum_y"]
    elif state is CellState.OG:
        prim = ["P", "Sg", y(3)] + [x(i) for i in heavy]
        peqs = [m(i) for i in _rng(1, n_c)]
        sec = [y(1), x(2)] + [y(i) for i in heavy] + [y(2), x(1)]
        seqs = [f(1), f(2)] + [f(i) for i in heavy] + ["sum_y", "sum_x"]
    else:
        prim = ["P", "Sg", "So"] + [x(i) for i in heavy]
        peqs = [m(i) for i in _rng(1, n_c)]
        sec = [y(1), x(2), y(3)] + [y(i) for i in heavy] + [y(2), x(3)]
        seqs = [f(1), f(2), f(3)] + [f(i) for i in heavy] + ["sum_y", "sum_x"]
    prim += [f"c{k}" for k in _rng(1, n_s)] + ["T"]
    peqs += [f"r{k}" for k in _rng(1, n_s)] + ["E"]
    return VariablePartition(state, n_c, n_s, tuple(prim), tuple(sec), tuple(peqs), tuple(seqs))


def local_pattern(part: VariablePartition) -> np.ndarray:
    """Boolean dependency pattern of the cell equations on the cell unknowns.

    Rows follow ``part.equations``, columns follow ``part.unknowns``. Mass
    equations depend on pressure, temperature, the saturations and the
    component's own phase fractions; phase equilibrium rows on pressure,
    temperature and the component's fractions; closure rows on every fraction
    of their phase; the energy row on everything; solid rows on pressure,
    temperature and their own concentration.
    """
    unk = part.unknowns
    pos = {u: k for k, u in enumerate(unk)}
    sats = [u for u in unk if u in ("Sg", "So")]
    pat = np.zeros((len(unk), len(unk)), dtype=bool)

    def mark(row, labels):
        for lb in labels:
            if lb in pos:
                pat[row, pos[lb]] = True

    for r, eq in enumerate(part.equations):
        if eq == "E":
            pat[r, :] = True
        elif eq.startswith("m"):
            i = eq[1:]
            mark(r, ["P", "T", f"y{i}", f"x{i}"] + sats)
        elif eq.startswith("f"):
            i = eq[1:]
            mark(r, ["P", "T", f"y{i}", f"x{i}"])
        elif eq == "sum_y":
            mark(r, [u for u in unk if u.startswith("y")])
        elif eq == "sum_x":
            mark(r, [u for u in unk if u.startswith("x")])
        elif eq.startswith("r"):
            mark(r, ["P", "T", f"c{eq[1:]}"])
        else:  # pragma: no cover - labels are generated above
            raise ValueError(eq)
    return pat


def coupling_pattern(part_i: VariablePartition, part_j: VariablePartition) -> np.ndarray:
    """Pattern of cell ``i`` equations on neighbour ``j`` unknowns (flux terms).

    Only mass and energy rows see neighbours; they depend on the neighbour's
    pressure, temperature, saturations and phase fractions of the same
    component (energy: all of them).
    """
    pos = {u: k for k, u in enumerate(part_j.unknowns)}
    sats = [u for u in part_j.unknowns if u in ("Sg", "So")]
    pat = np.zeros((len(part_i.equations), len(part_j.unknowns)), dtype=bool)
    for r, eq in enumerate(part_i.equations):
        if eq == "E":
            for u in part_j.unknowns:
                if not u.startswith("c"):
                    pat[r, pos[u]] = True
        elif eq.startswith("m"):
            i = eq[1:]
            for lb in ["P", "T", f"y{i}", f"x{i}"] + sats:
                if lb in pos:
                    pat[r, pos[lb]] = True
    return pat


@dataclass
class GlobalJacobian:
    """Full Jacobian over primary and secondary unknowns, cell by cell.

    Per-cell unknown order is ``partition.unknowns`` (primary, then
    secondary); equation rows follow ``partition.equations``. The Newton
    update solves ``J delta = -r``.
    """

    J: BlockMatrix
    r: np.ndarray
    states: list
    partitions: list

    @property
    def n_cells(self) -> int:
        return len(self.partitions)

    def _offsets(self):
        sizes = np.array([p.n_primary + p.n_secondary for p in self.partitions])
        return np.concatenate([[0], np.cumsum(sizes)])

    def primary_indices(self) -> np.ndarray:
        off = self._offsets()
        return np.concatenate([np.arange(off[c], off[c] + p.n_primary) for c, p in enumerate(self.partitions)])

    def secondary_indices(self) -> np.ndarray:
        off = self._offsets()
        return np.concatenate(
            [np.arange(off[c] + p.n_primary, off[c + 1]) for c, p in enumerate(self.partitions)]
            + [np.zeros(0, dtype=np.int64)]
        ).astype(np.int64)


def full_layout(partitions) -> FieldLayout:
    cells, tags = [], []
    for c, p in enumerate(partitions):
        t = p.primary_tags() + ["s"] * p.n_secondary
        cells += [c] * len(t)
        tags += t
    return FieldLayout(cells, tags)


def random_global_jacobian(states, n_c: int = 12, n_s: int = 1, seed=0, neighbours=None) -> GlobalJacobian:
    """Random Jacobian with the structural patterns of each state.

    Nonzero magnitudes are drawn from ``U[0.5, 2]`` with random signs off
    the diagonal; every diagonal entry then exceeds its row's absolute sum,
    which makes ``J`` and each ``J22`` block strictly diagonally dominant.
    ``neighbours`` lists undirected cell pairs (default: a 1D chain).
    """
    rng = np.random.default_rng(seed)
    states = [CellState(s) for s in states]
    parts = [ordering_for(s, n_c, n_s) for s in states]
    nc = len(parts)
    if neighbours is None:
        neighbours = [(i, i + 1) for i in range(nc - 1)]
    lay = full_layout(parts)

    def rand(pat):
        vals = rng.uniform(0.5, 2.0, pat.shape) * rng.choice([-1.0, 1.0], pat.shape)
        return np.where(pat, vals, 0.0)

    blocks = {}
    for c, p in enumerate(parts):
        blk = rand(local_pattern(p))
        np.fill_diagonal(blk, 0.0)
        blocks[(c, c)] = blk
    for i, j in neighbours:
        blocks[(i, j)] = rand(coupling_pattern(parts[i], parts[j]))
        blocks[(j, i)] = rand(coupling_pattern(parts[j], parts[i]))
    rowsum = [np.zeros(p.n_primary + p.n_secondary) for p in parts]
    for (i, _), blk in blocks.items():
        rowsum[i] += np.abs(blk).sum(axis=1)
    for c in range(nc):
        np.fill_diagonal(blocks[(c, c)], rowsum[c] + rng.uniform(0.5, 2.0, rowsum[c].size))
    J = assemble([(i, j, b) for (i, j), b in sorted(blocks.items())], lay)
    r = rng.uniform(-1.0, 1.0, lay.n_unknowns)
    return GlobalJacobian(J, r, states, parts)


@dataclass
class SecondaryBlockReport:
    cell: int
    state: CellState
    zero_diagonal: list
    invertible: bool
    pivoted: bool
    condition: float


def _secondary_block(G: GlobalJacobian, c: int) -> np.ndarray:
    p = G.partitions[c]
    blk = G.J.block(c, c)
    return blk[p.n_primary:, p.n_primary:]


def secondary_block_from_pattern(part: VariablePartition, values=None) -> np.ndarray:
    """``J22`` of one cell with the given partition; ``values`` fills the pattern (default ones)."""
    pat = local_pattern(part)[part.n_primary:, part.n_primary:]
    return np.where(pat, 1.0 if values is None else values[: pat.shape[0], : pat.shape[1]], 0.0)


def check_block(blk: np.ndarray, labels=()) -> tuple:
    """(zero-diagonal labels, invertible, pivoted, condition) of one dense block."""
    n = blk.shape[0]
    if n == 0:
        return [], True, False, 1.0
    zero = [labels[k] if k < len(labels) else k for k in np.flatnonzero(np.diag(blk) == 0.0)]
    scale = np.abs(blk).max()
    if scale == 0.0:
        return zero, False, False, float("inf")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(blk, check_finite=False)
    ok = bool(np.all(np.abs(np.diag(lu)) > 1e-12 * scale))
    pivoted = bool(np.any(piv != np.arange(n)))
    cond = float(np.linalg.cond(blk)) if ok else float("inf")
    return zero, ok, pivoted, cond


def verify_secondary_blocks(G: GlobalJacobian, partitions=None) -> list:
    """Per-cell diagnostics of the secondary blocks under the given alignment."""
    parts = partitions if partitions is not None else G.partitions
    out = []
    for c, p in enumerate(parts):
        zero, ok, piv, cond = check_block(_secondary_block(G, c), p.secondary)
        out.append(SecondaryBlockReport(c, p.state, zero, ok, piv, cond))
    return out


@dataclass
class ReducedSystem:
    """Primary-only system plus everything needed to recover the secondary update."""

    A: BlockMatrix
    b: np.ndarray
    #: per-cell LU factors of J22
    factors: list
    J21: sps.csr_matrix
    r2: np.ndarray
    #: ``delta1_reduced = delta1_primary[perm]``
    perm: np.ndarray
    primary_idx: np.ndarray
    secondary_idx: np.ndarray
    sec_ptr: np.ndarray
    pivoted_cells: list = field(default_factory=list)

    @property
    def n_full(self) -> int:
        return self.primary_idx.size + self.secondary_idx.size

    def _lu_solve(self, rhs):
        out = np.empty_like(rhs)
        for c, F in enumerate(self.factors):
            sl = slice(self.sec_ptr[c], self.sec_ptr[c + 1])
            if sl.stop > sl.start:
                out[sl] = sla.lu_solve(F, rhs[sl], check_finite=False)
        return out

    def full_solution(self, delta1) -> np.ndarray:
        """Full update ``delta`` in the original per-cell order."""
        delta1 = np.asarray(delta1, dtype=np.float64)
        d1 = np.empty_like(delta1)
        d1[self.perm] = delta1
        out = np.empty(self.n_full)
        out[self.primary_idx] = d1
        out[self.secondary_idx] = back_substitute(self, delta1)
        return out


def _reduced_order(G: GlobalJacobian):
    """Permutation to (s..., P, T) within each cell and the matching layout."""
    perm, cells, tags = [], [], []
    off = 0
    for c, p in enumerate(G.partitions):
        t = p.primary_tags()
        order = [k for k, x in enumerate(t) if x == "s"] + [t.index("P")] + [k for k, x in enumerate(t) if x == "T"]
        perm += [off + k for k in order]
        cells += [c] * len(order)
        tags += [t[k] for k in order]
        off += p.n_primary
    return np.array(perm, dtype=np.int64), FieldLayout(cells, tags)


def condense(G: GlobalJacobian) -> ReducedSystem:
    """Eliminate the secondary unknowns exactly.

    The reduced matrix is returned in a per-cell ``(s..., P, T)`` order.
    """
    ip, iq = G.primary_indices(), G.secondary_indices()
    J = G.J.csr
    J11 = J[ip][:, ip]
    J12 = J[ip][:, iq]
    J21 = J[iq][:, ip].tocsr()
    r1, r2 = G.r[ip], G.r[iq]
    factors, inv_blocks, pivoted = [], [], []
    sec_ptr = [0]
    for c, p in enumerate(G.partitions):
        blk = _secondary_block(G, c)
        sec_ptr.append(sec_ptr[-1] + blk.shape[0])
        if blk.shape[0] == 0:
            factors.append(None)
            inv_blocks.append(blk)
            continue
        _, ok, piv, _ = check_block(blk)
        if not ok:
            raise SingularSecondaryBlock(c)
        F = sla.lu_factor(blk, check_finite=False)
        factors.append(F)
        if piv:
            pivoted.append(c)
        inv_blocks.append(sla.lu_solve(F, np.eye(blk.shape[0]), check_finite=False))
    J22inv = sps.block_diag(inv_blocks, format="csr") if iq.size else sps.csr_matrix((0, 0))
    A = (J11 - J12 @ (J22inv @ J21)).tocsr()
    b = -r1 + J12 @ (J22inv @ r2)
    perm, lay = _reduced_order(G)
    A = A[perm][:, perm]
    return ReducedSystem(
        BlockMatrix.from_csr(A, lay), np.asarray(b)[perm], factors, J21, r2, perm, ip, iq, np.array(sec_ptr)
    )


def back_substitute(R: ReducedSystem, delta1) -> np.ndarray:
    """``delta2 = J22^{-1} (-r2 - J21 delta1)`` with ``delta1`` in reduced order."""
    delta1 = np.asarray(delta1, dtype=np.float64)
    if delta1.shape != (R.perm.size,):
        raise DimensionMismatch(f"primary update length {delta1.shape} != {R.perm.size}")
    d1 = np.empty_like(delta1)
    d1[R.perm] = delta1
    return R._lu_solve(-R.r2 - R.J21 @ d1)


# -- wells ---------------------------------------------------------------------

@dataclass
class ReservoirSystem:
    """Plain reservoir Jacobian ``J`` and residual ``r`` (update solves ``J delta = -r``)."""

    J: BlockMatrix
    r: np.ndarray

@dataclass
class WellCoupledJacobian:
    """Reservoir Jacobian bordered by two single-perforation wells.

    ``J_rw`` (n x 2) and ``J_wr`` (2 x n) are the reservoir/well couplings,
    ``J_ww`` the 2 x 2 well block and ``r_w`` the well residuals. ``base`` is
    a :class:`GlobalJacobian` or anything with ``J`` and ``r`` attributes.
    """

    base: object
    well_cells: tuple
    J_rw: np.ndarray
    J_wr: np.ndarray
    J_ww: np.ndarray
    r_w: np.ndarray

    def full_matrix(self) -> np.ndarray:
        A = self.base.J.to_dense()
        return np.block([[A, self.J_rw], [self.J_wr, self.J_ww]])

    def full_residual(self) -> np.ndarray:
        return np.concatenate([self.base.r, self.r_w])


def quarter_five_spot_wells(base, inj_cell: int, prod_cell: int, p_index, wi_inj: float, wi_prod: float,
                            r_w=None) -> WellCoupledJacobian:
    """Rate-controlled injector and pressure-controlled producer.

    ``p_index(c)`` gives the global row/column of the pressure (carrier mass)
    unknown of cell ``c``. The injector rate residual ``WI (p_w - p_c) - q``
    and the producer constraint ``p_w - p_target`` give a diagonal ``J_ww``.
    """
    n = base.J.shape[0]
    J_rw = np.zeros((n, 2))
    J_wr = np.zeros((2, n))
    pi, pp = p_index(inj_cell), p_index(prod_cell)
    # injector: inflow WI (p_w - p_c) enters the cell balance with a minus sign
    J_rw[pi, 0] = -wi_inj
    J_wr[0, pi] = -wi_inj
    # producer: outflow WI (p_c - p_w)
    J_rw[pp, 1] = -wi_prod
    J_ww = np.diag([wi_inj, 1.0])
    r_w = np.zeros(2) if r_w is None else np.asarray(r_w, dtype=np.float64)
    return WellCoupledJacobian(base, (inj_cell, prod_cell), J_rw, J_wr, J_ww, r_w)


def eliminate_wells(W: WellCoupledJacobian):
    """Exact Schur complement of the 2 x 2 well block.

    Returns a copy of ``W.base`` with ``J - J_rw J_ww^{-1} J_wr`` and
    ``r - J_rw J_ww^{-1} r_w``. Only the diagonal blocks of the perforated
    cells change, so the reservoir pattern is preserved.
    """
    if W.J_ww.shape != (2, 2):
        raise DimensionMismatch("well block must be 2 x 2")
    try:
        Winv = invert_block(np.asarray(W.J_ww, dtype=np.float64))
    except SingularBlock as exc:
        raise SingularBlock(-1, "singular well block") from exc
    base = W.base
    lay = base.J.layout
    n = base.J.shape[0]
    if W.J_rw.shape != (n, 2) or W.J_wr.shape != (2, n):
        raise DimensionMismatch("well coupling shapes do not match the reservoir system")
    allowed = np.zeros((2, n), dtype=bool)
    for k, c in enumerate(W.well_cells):
        allowed[k, lay.cell_slice(c)] = True
    if np.any((W.J_rw.T != 0) & ~allowed) or np.any((W.J_wr != 0) & ~allowed):
        raise ValueError("each well may couple only to its perforated cell")
    upd = W.J_rw @ Winv @ W.J_wr
    inside = np.zeros((n, n), dtype=bool)
    for c in W.well_cells:
        sl = lay.cell_slice(c)
        inside[sl, sl] = True
    if np.any((upd != 0) & ~inside):
        raise ValueError("coupled wells would add fill outside the perforated diagonal blocks")
    csr = base.J.csr
    data = csr.data.copy()
    for c in set(W.well_cells):
        sl = lay.cell_slice(c)
        for row in range(sl.start, sl.stop):
            a, z = csr.indptr[row], csr.indptr[row + 1]
            data[a:z] -= upd[row, csr.indices[a:z]]
    r_new = base.r - W.J_rw @ (Winv @ W.r_w)
    return replace(base, J=base.J.with_data(data), r=r_new)
