"""Matrix Market and sidecar files for exchanging systems with other solvers.

Layout sidecar: header ``n_unknowns n_cells`` then one ``<cell_id> <field_tag>``
line per scalar unknown. State sidecar: header ``n_cells n_c n_s`` then one
``<cell_id> <G|OG|OWG>`` line per cell.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sps

from .blockmat import FIELD_TAGS, BlockMatrix, FieldLayout
from .errors import DimensionMismatch, LayoutError


def write_matrix(path, A) -> None:
    mat = A.csr if isinstance(A, BlockMatrix) else sps.csr_matrix(A)
    scipy.io.mmwrite(str(path), sps.coo_matrix(mat), field="real", symmetry="general", precision=17)


def read_matrix(path) -> sps.csr_matrix:
    M = scipy.io.mmread(str(path))
    M = sps.csr_matrix(M, dtype=np.float64)
    if M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"matrix in {path} is not square: {M.shape}")
    return M


def write_vector(path, v) -> None:
    np.savetxt(str(path), np.asarray(v, dtype=np.float64), fmt="%.17g")


def read_vector(path) -> np.ndarray:
    return np.atleast_1d(np.loadtxt(str(path), dtype=np.float64))


def write_layout(path, layout: FieldLayout) -> None:
    with open(path, "w") as fh:
        fh.write(f"{layout.n_unknowns} {layout.n_cells}\n")
        for c, t in zip(layout.cell_ids, layout.tags):
            fh.write(f"{c} {t}\n")


def read_layout(path) -> FieldLayout:
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or len(lines[0]) != 2:
        raise LayoutError(f"{path}: missing 'n_unknowns n_cells' header")
    n, nc = int(lines[0][0]), int(lines[0][1])
    body = lines[1:]
    if len(body) != n:
        raise LayoutError(f"{path}: header announces {n} unknowns, found {len(body)}")
    cells, tags = [], []
    for k, parts in enumerate(body):
        if len(parts) != 2:
            raise LayoutError(f"{path}: malformed line {k + 2}")
        if parts[1] not in FIELD_TAGS:
            raise LayoutError(f"{path}: unknown field tag {parts[1]!r} on line {k + 2}", int(parts[0]))
        cells.append(int(parts[0]))
        tags.append(parts[1])
    lay = FieldLayout(cells, tags)
    if lay.n_cells != nc:
        raise LayoutError(f"{path}: header announces {nc} cells, found {lay.n_cells}")
    return lay


def write_states(path, states, n_c: int, n_s: int) -> None:
    with open(path, "w") as fh:
        fh.write(f"{len(states)} {n_c} {n_s}\n")
        for c, s in enumerate(states):
            fh.write(f"{c} {getattr(s, 'value', s)}\n")


def read_states(path):
    """``(states, n_c, n_s)`` with states as :class:`~cptr.condense.CellState`."""
    from .condense import CellState

    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or len(lines[0]) != 3:
        raise LayoutError(f"{path}: missing 'n_cells n_c n_s' header")
    nc, n_c, n_s = (int(v) for v in lines[0])
    states = [None] * nc
    for parts in lines[1:]:
        c = int(parts[0])
        if not 0 <= c < nc:
            raise LayoutError(f"{path}: cell id {c} out of range", c)
        try:
            states[c] = CellState(parts[1])
        except ValueError:
            raise LayoutError(f"{path}: unknown phase state {parts[1]!r}", c) from None
    missing = [c for c, s in enumerate(states) if s is None]
    if missing:
        raise LayoutError(f"{path}: no state for cell {missing[0]}", missing[0])
    return states, n_c, n_s
