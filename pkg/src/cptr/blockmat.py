"""Block-sparse matrices with a (cell, field) layout.

Every scalar unknown belongs to one grid cell and carries one field tag:

* ``s`` -- saturations, mole fractions, solid concentrations (any count per cell)
* ``P`` -- pressure (exactly one per cell)
* ``T`` -- temperature (at most one per cell)

Unknowns are stored cell-wise: all unknowns of cell 0, then cell 1, ...
A :class:`BlockMatrix` keeps its values in a scalar CSR matrix where every
present cell block is stored densely (explicit zeros included), so the
block-row of a cell is a small dense ``(n_cell, n_cols)`` array aligned with
shared column indices. Scalar sub-matrices (:func:`extract_submatrix`,
:func:`schur_update`) are plain ``scipy.sparse.csr_matrix`` objects.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

from .errors import DimensionMismatch, LayoutError, SingularBlock

FIELD_TAGS = ("s", "P", "T")

#: Relative pivot tolerance used when none is given: ``1e-12 * max|block|``.
DEFAULT_PIVOT_RTOL = 1e-12


def _as_fields(fields) -> tuple[str, ...]:
    if isinstance(fields, str):
        fields = tuple(fields) if fields not in FIELD_TAGS else (fields,)
    fields = tuple(fields)
    if not fields:
        raise ValueError("empty field selection")
    for f in fields:
        if f not in FIELD_TAGS:
            raise LayoutError(f"unknown field tag {f!r}")
    return fields


class FieldLayout:
    """Cell id and field tag for every scalar unknown.

    Unknowns must be grouped by cell with ascending cell ids. Each cell holds
    exactly one ``P`` unknown and zero or one ``T`` unknown; cells either all
    carry a temperature or none does.
    """

    def __init__(self, cell_ids: Sequence[int], tags: Sequence[str]):
        cell_ids = np.asarray(cell_ids, dtype=np.int64)
        tags = np.asarray(list(tags), dtype="<U8")
        if cell_ids.ndim != 1 or cell_ids.shape != tags.shape:
            raise LayoutError("cell_ids and tags must be 1-D and of equal length")
        if cell_ids.size == 0:
            raise LayoutError("layout has no unknowns")
        bad = ~np.isin(tags, FIELD_TAGS)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise LayoutError(f"unknown field tag {tags[i]!r} for unknown {i}", int(cell_ids[i]))
        if cell_ids[0] != 0 or np.any(np.diff(cell_ids) < 0) or np.any(np.diff(cell_ids) > 1):
            raise LayoutError("unknowns must be grouped by cell with contiguous ascending cell ids")
        n_cells = int(cell_ids[-1]) + 1
        n_p = np.bincount(cell_ids[tags == "P"], minlength=n_cells)
        n_t = np.bincount(cell_ids[tags == "T"], minlength=n_cells)
        if np.any(n_p != 1):
            c = int(np.flatnonzero(n_p != 1)[0])
            raise LayoutError(f"cell {c} has {n_p[c]} pressure unknowns (expected 1)", c)
        if np.any(n_t > 1):
            c = int(np.flatnonzero(n_t > 1)[0])
            raise LayoutError(f"cell {c} has {n_t[c]} temperature unknowns", c)
        if n_t.any() and not n_t.all():
            c = int(np.flatnonzero(n_t == 0)[0])
            raise LayoutError(f"cell {c} has no temperature unknown while other cells do", c)
        self.cell_ids = cell_ids
        self.tags = tags
        self.n_cells = n_cells
        self.cell_ptr = np.concatenate([[0], np.cumsum(np.bincount(cell_ids, minlength=n_cells))])
        self.cell_ids.setflags(write=False)
        self.tags.setflags(write=False)
        self.cell_ptr.setflags(write=False)

    @classmethod
    def uniform(cls, n_cells: int, n_s: int, thermal: bool = True) -> "FieldLayout":
        """Layout with the intra-cell order ``(s_1..s_n, P, T)`` in every cell."""
        per_cell = ["s"] * n_s + ["P"] + (["T"] if thermal else [])
        return cls(np.repeat(np.arange(n_cells), len(per_cell)), per_cell * n_cells)

    @property
    def n_unknowns(self) -> int:
        return int(self.tags.size)

    @property
    def has_temperature(self) -> bool:
        return bool(np.any(self.tags == "T"))

    @property
    def block_sizes(self) -> np.ndarray:
        return np.diff(self.cell_ptr)

    def cell_slice(self, c: int) -> slice:
        return slice(int(self.cell_ptr[c]), int(self.cell_ptr[c + 1]))

    def count(self, field: str) -> np.ndarray:
        """Per-cell number of unknowns tagged ``field``."""
        return np.bincount(self.cell_ids[self.tags == field], minlength=self.n_cells)

    def indices(self, fields) -> np.ndarray:
        """Global indices of unknowns with a tag in ``fields`` (cell, then intra-cell order)."""
        return np.flatnonzero(np.isin(self.tags, _as_fields(fields)))

    def local_indices(self, c: int, fields) -> np.ndarray:
        sl = self.cell_slice(c)
        return np.flatnonzero(np.isin(self.tags[sl], _as_fields(fields)))

    def partition_permutation(self, groups=(("s",), ("P",), ("T",))) -> np.ndarray:
        """Permutation ``perm`` with ``x[perm]`` in field-grouped (partitioned) order."""
        return np.concatenate([self.indices(g) for g in groups if np.isin(self.tags, g).any()])

    def restrict(self, fields) -> "FieldLayout":
        idx = self.indices(fields)
        return FieldLayout(self.cell_ids[idx], self.tags[idx])

    def __eq__(self, other):
        return (
            isinstance(other, FieldLayout)
            and np.array_equal(self.cell_ids, other.cell_ids)
            and np.array_equal(self.tags, other.tags)
        )

    def __repr__(self):
        return f"FieldLayout(n_cells={self.n_cells}, n_unknowns={self.n_unknowns})"


def _canonical_csr(indptr, indices, data, shape) -> sps.csr_matrix:
    m = sps.csr_matrix((data, indices, indptr), shape=shape)
    m.has_sorted_indices = True
    m.has_canonical_format = True
    return m


class BlockMatrix:
    """Square block-sparse matrix over a :class:`FieldLayout`.

    Construct with :func:`assemble` or :meth:`from_csr`; treat as immutable.
    """

    def __init__(self, csr: sps.csr_matrix, layout: FieldLayout, block_ptr, block_col, check: bool = True):
        n = layout.n_unknowns
        if csr.shape != (n, n):
            raise DimensionMismatch(f"matrix shape {csr.shape} does not match layout size {n}")
        self.csr = csr
        self.layout = layout
        self.block_ptr = np.asarray(block_ptr, dtype=np.int64)
        self.block_col = np.asarray(block_col, dtype=np.int64)
        if check:
            self._check()

    def _check(self):
        lay = self.layout
        bs = lay.block_sizes
        for c in range(lay.n_cells):
            cols = self.block_col[self.block_ptr[c]:self.block_ptr[c + 1]]
            if cols.size == 0 or np.any(np.diff(cols) <= 0):
                raise ValueError(f"block row {c} is not canonical")
            if c not in cols:
                raise ValueError(f"diagonal block of cell {c} missing")
            width = int(bs[cols].sum())
            sl = lay.cell_slice(c)
            lens = np.diff(self.csr.indptr[sl.start:sl.stop + 1])
            if np.any(lens != width):
                raise ValueError(f"rows of cell {c} do not hold full dense blocks")

    # -- construction -----------------------------------------------------
    @classmethod
    def from_csr(cls, matrix, layout: FieldLayout) -> "BlockMatrix":
        """Wrap a scalar sparse matrix, filling every touched cell block densely."""
        A = sps.csr_matrix(matrix)
        n = layout.n_unknowns
        if A.shape != (n, n):
            raise DimensionMismatch(f"matrix shape {A.shape} does not match layout size {n}")
        coo = A.tocoo()
        cid = layout.cell_ids
        nc = layout.n_cells
        pairs = np.unique(
            np.concatenate([cid[coo.row] * nc + cid[coo.col], np.arange(nc) * (nc + 1)])
        )
        brow, bcol = pairs // nc, pairs % nc
        block_ptr = np.concatenate([[0], np.cumsum(np.bincount(brow, minlength=nc))])
        indptr, indices = _pattern_from_blocks(layout, block_ptr, bcol)
        rows = np.repeat(np.arange(n), np.diff(indptr))
        data = np.asarray(A[rows, indices]).ravel().astype(np.float64)
        return cls(_canonical_csr(indptr, indices, data, (n, n)), layout, block_ptr, bcol, check=False)

    @classmethod
    def identity(cls, layout: FieldLayout) -> "BlockMatrix":
        return cls.from_csr(sps.identity(layout.n_unknowns, format="csr"), layout)

    def with_data(self, data: np.ndarray) -> "BlockMatrix":
        """Same pattern, new values."""
        csr = _canonical_csr(self.csr.indptr, self.csr.indices, np.asarray(data, dtype=np.float64), self.shape)
        return BlockMatrix(csr, self.layout, self.block_ptr, self.block_col, check=False)

    # -- queries ----------------------------------------------------------
    @property
    def shape(self):
        return self.csr.shape

    @property
    def n_cells(self) -> int:
        return self.layout.n_cells

    @property
    def nnz(self) -> int:
        return int(self.csr.nnz)

    @property
    def n_blocks(self) -> int:
        return int(self.block_col.size)

    def block_columns(self, c: int) -> np.ndarray:
        return self.block_col[self.block_ptr[c]:self.block_ptr[c + 1]]

    def row_block(self, c: int):
        """Column indices and dense ``(n_cell, width)`` view of the block row of cell ``c``."""
        sl = self.layout.cell_slice(c)
        start, stop = self.csr.indptr[sl.start], self.csr.indptr[sl.stop]
        nrow = sl.stop - sl.start
        width = (stop - start) // nrow if nrow else 0
        cols = self.csr.indices[start:start + width]
        return cols, self.csr.data[start:stop].reshape(nrow, width)

    def block(self, i: int, j: int) -> np.ndarray:
        """Dense copy of block ``(i, j)``; zeros if structurally absent."""
        lay = self.layout
        out = np.zeros((lay.block_sizes[i], lay.block_sizes[j]))
        cols, vals = self.row_block(i)
        sj = lay.cell_slice(j)
        mask = (cols >= sj.start) & (cols < sj.stop)
        if mask.any():
            out[:, cols[mask] - sj.start] = vals[:, mask]
        return out

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def __matmul__(self, x):
        return spmv(self, x)

    def __repr__(self):
        return f"BlockMatrix(n_cells={self.n_cells}, shape={self.shape}, blocks={self.n_blocks})"


def _pattern_from_blocks(layout: FieldLayout, block_ptr, block_col):
    """Scalar CSR (indptr, indices) holding every listed cell block densely."""
    bs = layout.block_sizes
    cp = layout.cell_ptr
    row_cols = []
    widths = np.zeros(layout.n_cells, dtype=np.int64)
    for c in range(layout.n_cells):
        cols = block_col[block_ptr[c]:block_ptr[c + 1]]
        rc = np.concatenate([np.arange(cp[j], cp[j + 1]) for j in cols])
        row_cols.append(np.tile(rc, bs[c]))
        widths[c] = rc.size
    indices = np.concatenate(row_cols).astype(np.int32)
    lens = np.repeat(widths, bs)
    indptr = np.concatenate([[0], np.cumsum(lens)]).astype(np.int64)
    return indptr, indices


def assemble(entries: Iterable, layout: FieldLayout) -> BlockMatrix:
    """Build a :class:`BlockMatrix` from ``(cell_row, cell_col, dense_block)`` triples.

    Duplicate ``(row, col)`` blocks are summed. Missing diagonal blocks are
    stored as explicit zeros.
    """
    bs = layout.block_sizes
    nc = layout.n_cells
    acc: dict[tuple[int, int], np.ndarray] = {}
    for i, j, blk in entries:
        i, j = int(i), int(j)
        if not (0 <= i < nc and 0 <= j < nc):
            raise IndexError(f"block index ({i}, {j}) out of range for {nc} cells")
        blk = np.atleast_2d(np.asarray(blk, dtype=np.float64))
        if blk.shape != (bs[i], bs[j]):
            raise DimensionMismatch(f"block ({i}, {j}) has shape {blk.shape}, expected {(bs[i], bs[j])}")
        if (i, j) in acc:
            acc[(i, j)] = acc[(i, j)] + blk
        else:
            acc[(i, j)] = blk.copy()
    for c in range(nc):
        acc.setdefault((c, c), np.zeros((bs[c], bs[c])))
    keys = sorted(acc)
    brow = np.array([k[0] for k in keys], dtype=np.int64)
    bcol = np.array([k[1] for k in keys], dtype=np.int64)
    block_ptr = np.concatenate([[0], np.cumsum(np.bincount(brow, minlength=nc))])
    indptr, indices = _pattern_from_blocks(layout, block_ptr, bcol)
    data = np.empty(indices.size)
    for c in range(nc):
        lo, hi = block_ptr[c], block_ptr[c + 1]
        rowdata = np.hstack([acc[(c, int(j))] for j in bcol[lo:hi]])
        start = indptr[layout.cell_ptr[c]]
        data[start:start + rowdata.size] = rowdata.ravel()
    n = layout.n_unknowns
    return BlockMatrix(_canonical_csr(indptr, indices, data, (n, n)), layout, block_ptr, bcol, check=False)


def extract_submatrix(A: BlockMatrix, row_fields, col_fields) -> sps.csr_matrix:
    """Scalar sub-matrix on the requested field tags; stored zeros are kept."""
    rows = A.layout.indices(row_fields)
    cols = A.layout.indices(col_fields)
    if rows.size == 0 or cols.size == 0:
        raise ValueError("field selection matches no unknowns")
    sub = A.csr[rows][:, cols].tocsr()
    sub.sort_indices()
    return sub


@dataclass
class DiagonalApprox:
    """Per-cell diagonal blocks of a field-pair sub-matrix.

    ``blocks[c]`` has shape ``(n_row_fields_in_c, n_col_fields_in_c)``.
    ``empty`` flags cells where the field pair has no rows or columns.
    """

    blocks: list
    row_fields: tuple
    col_fields: tuple
    inverted: bool = False
    empty: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.empty is None:
            self.empty = np.array([b.size == 0 for b in self.blocks], dtype=bool)

    @property
    def n_cells(self) -> int:
        return len(self.blocks)

    @property
    def shape(self):
        return (sum(b.shape[0] for b in self.blocks), sum(b.shape[1] for b in self.blocks))

    def as_sparse(self) -> sps.csr_matrix:
        """Block-diagonal scalar matrix (rows/cols ordered like :func:`extract_submatrix`)."""
        rows, cols, vals = [], [], []
        r0 = c0 = 0
        for b in self.blocks:
            m, n = b.shape
            if m and n:
                rr, cc = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
                rows.append((rr + r0).ravel())
                cols.append((cc + c0).ravel())
                vals.append(b.ravel())
            r0 += m
            c0 += n
        if rows:
            rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        return sps.csr_matrix((vals, (rows, cols)), shape=(r0, c0))

    def __matmul__(self, other: "DiagonalApprox") -> "DiagonalApprox":
        if self.n_cells != other.n_cells:
            raise DimensionMismatch("cell counts differ")
        out = []
        for a, b in zip(self.blocks, other.blocks):
            if a.shape[1] != b.shape[0]:
                raise DimensionMismatch(f"inner block sizes differ: {a.shape} @ {b.shape}")
            out.append(a @ b)
        return DiagonalApprox(out, self.row_fields, other.col_fields)


def block_diagonal_of(A: BlockMatrix, row_fields, col_fields, mode: str = "block") -> DiagonalApprox:
    """Cell-local blocks of ``A[row_fields, col_fields]``; inter-cell coupling is discarded.

    ``mode="scalar"`` keeps only the scalar main diagonal of square same-field
    blocks (a point-Jacobi style approximation). Rectangular cross-field
    blocks have no main diagonal and are always taken whole.
    """
    if mode not in ("block", "scalar"):
        raise ValueError(f"unknown diagonal mode {mode!r}")
    rf, cf = _as_fields(row_fields), _as_fields(col_fields)
    lay = A.layout
    blocks = []
    for c in range(lay.n_cells):
        blk = A.block(c, c)
        ri = lay.local_indices(c, rf)
        ci = lay.local_indices(c, cf)
        sub = blk[np.ix_(ri, ci)]
        if mode == "scalar" and set(rf) == set(cf):
            sub = np.diag(np.diag(sub))
        blocks.append(sub)
    return DiagonalApprox(blocks, rf, cf)


def invert_block(blk: np.ndarray, pivot_tolerance=None, cell_id: int = -1) -> np.ndarray:
    """Dense inverse by partial-pivoting LU with a scale-aware pivot test."""
    n = blk.shape[0]
    if blk.shape != (n, n):
        raise DimensionMismatch(f"block of shape {blk.shape} is not square")
    if n == 0:
        return blk.copy()
    scale = np.abs(blk).max()
    tol = DEFAULT_PIVOT_RTOL * scale if pivot_tolerance is None else pivot_tolerance
    if scale == 0.0 or not np.all(np.isfinite(blk)):
        raise SingularBlock(cell_id)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(blk, check_finite=False)
    if np.any(np.abs(np.diag(lu)) <= tol):
        raise SingularBlock(cell_id)
    return sla.lu_solve((lu, piv), np.eye(n), check_finite=False)


def invert_diagonal(D: DiagonalApprox, pivot_tolerance=None) -> DiagonalApprox:
    """Invert every cell block; raises :class:`SingularBlock` with the cell id on failure.

    ``pivot_tolerance=None`` uses ``1e-12 * max|entry|`` of each block.
    """
    out = [invert_block(b, pivot_tolerance, c) for c, b in enumerate(D.blocks)]
    return DiagonalApprox(out, D.col_fields, D.row_fields, inverted=not D.inverted, empty=D.empty.copy())


def schur_update(A_tgt, D_left: DiagonalApprox, D_mid_inv: DiagonalApprox, A_right) -> sps.csr_matrix:
    """``A_tgt - D_left @ D_mid_inv @ A_right`` in exact sparse arithmetic."""
    L = D_left.as_sparse()
    M = D_mid_inv.as_sparse()
    A_tgt = sps.csr_matrix(A_tgt)
    A_right = sps.csr_matrix(A_right)
    if L.shape[1] != M.shape[0] or M.shape[1] != A_right.shape[0]:
        raise DimensionMismatch(f"cannot chain {L.shape} @ {M.shape} @ {A_right.shape}")
    if (L.shape[0], A_right.shape[1]) != A_tgt.shape:
        raise DimensionMismatch(f"update shape {(L.shape[0], A_right.shape[1])} != target {A_tgt.shape}")
    out = (A_tgt - (L @ M) @ A_right).tocsr()
    out.sum_duplicates()
    out.sort_indices()
    return out


def spmv(A, x) -> np.ndarray:
    """``A @ x`` for :class:`BlockMatrix` or scalar sparse/dense matrices."""
    x = np.asarray(x, dtype=np.float64)
    mat = A.csr if isinstance(A, BlockMatrix) else A
    if x.shape[0] != mat.shape[1]:
        raise DimensionMismatch(f"vector length {x.shape[0]} != matrix columns {mat.shape[1]}")
    return np.asarray(mat @ x)
