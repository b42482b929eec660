import numpy as np
import pytest
import scipy.sparse as sps

from conftest import random_block_system
from cptr.blockmat import FieldLayout
from cptr.condense import CellState
from cptr.errors import LayoutError
from cptr.mmio import (
    read_layout,
    read_matrix,
    read_states,
    read_vector,
    write_layout,
    write_matrix,
    write_states,
    write_vector,
)


def test_matrix_round_trip_is_exact(tmp_path):
    A, _ = random_block_system(6, 2, seed=1)
    p = tmp_path / "a.mtx"
    write_matrix(p, A)
    M = read_matrix(p)
    assert (M != A.csr).nnz == 0
    assert M.dtype == np.float64


def test_non_square_matrix_rejected(tmp_path):
    import scipy.io

    p = tmp_path / "r.mtx"
    scipy.io.mmwrite(str(p), sps.coo_matrix(np.ones((2, 3))))
    with pytest.raises(Exception):
        read_matrix(p)


def test_vector_round_trip(tmp_path, rng):
    v = rng.standard_normal(17)
    p = tmp_path / "b.rhs"
    write_vector(p, v)
    np.testing.assert_array_equal(read_vector(p), v)
    write_vector(p, v[:1])
    assert read_vector(p).shape == (1,)


def test_layout_round_trip(tmp_path):
    lay = FieldLayout.uniform(4, 2, thermal=True)
    p = tmp_path / "a.layout"
    write_layout(p, lay)
    back = read_layout(p)
    assert list(back.tags) == list(lay.tags)
    assert list(back.cell_ids) == list(lay.cell_ids)


def test_layout_count_mismatch(tmp_path):
    p = tmp_path / "bad.layout"
    p.write_text("3 1\n0 P\n0 T\n")
    with pytest.raises(LayoutError):
        read_layout(p)


def test_layout_unknown_tag(tmp_path):
    p = tmp_path / "bad.layout"
    p.write_text("2 1\n0 P\n0 Q\n")
    with pytest.raises(LayoutError):
        read_layout(p)


def test_layout_cell_without_pressure(tmp_path):
    p = tmp_path / "bad.layout"
    p.write_text("4 2\n0 s\n0 P\n1 s\n1 T\n")
    with pytest.raises(LayoutError) as exc:
        read_layout(p)
    assert exc.value.cell_id == 1


def test_states_round_trip(tmp_path):
    states = [CellState.G, CellState.OWG, CellState.OG]
    p = tmp_path / "a.states"
    write_states(p, states, 12, 1)
    back, n_c, n_s = read_states(p)
    assert back == states and (n_c, n_s) == (12, 1)


def test_states_errors(tmp_path):
    p = tmp_path / "a.states"
    p.write_text("2 4 0\n0 G\n1 W\n")
    with pytest.raises(LayoutError):
        read_states(p)
    p.write_text("2 4 0\n0 G\n")
    with pytest.raises(LayoutError) as exc:
        read_states(p)
    assert exc.value.cell_id == 1
