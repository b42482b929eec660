import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cptr.blockmat import extract_submatrix
from cptr.condense import CellState, condense, eliminate_wells, verify_secondary_blocks
from cptr.errors import DimensionMismatch
from cptr.harness import solve_system
from cptr.synth import (
    ProblemSpec,
    build_grid,
    build_problem,
    field_ratio,
    front_state,
    load_field,
    lognormal_field,
    peclet,
    upwind_advection_matrix,
    write_field,
)
from oracles import load_frozen, peclet_reference

BASELINES = json.loads((Path(__file__).parent / "fixtures" / "baselines.json").read_text())


# -- Peclet number ---------------------------------------------------------------

def test_peclet_table_values():
    pe = peclet(ProblemSpec())
    assert pe == pytest.approx(load_frozen()["peclet_table_values"], rel=1e-14)
    assert pe == pytest.approx(1.087, abs=5e-4)


def test_peclet_without_convection():
    assert peclet(ProblemSpec(cp=0.0)) == 0.0


def test_peclet_scales_inversely_with_conductivity():
    s = ProblemSpec()
    s100 = ProblemSpec(conductivity=100 * s.conductivity)
    assert peclet(s100) == pytest.approx(peclet(s) / 100, rel=1e-14)


@given(st.floats(1e-3, 1e4), st.floats(1.001, 100.0))
def test_peclet_monotone_in_conductivity(kappa, factor):
    a = ProblemSpec(conductivity=kappa)
    b = ProblemSpec(conductivity=kappa * factor)
    assert peclet(b) < peclet(a)
    assert peclet(a) == pytest.approx(peclet_reference(4.32, 3.1, 1.42, kappa, 0.35), rel=1e-13)


@given(st.floats(1e-3, 1e3))
def test_with_peclet_round_trip(pe):
    assert peclet(ProblemSpec().with_peclet(pe)) == pytest.approx(pe, rel=1e-12)


# -- fields --------------------------------------------------------------------------

def test_uniform_field_file(tmp_path):
    p = tmp_path / "k.txt"
    p.write_text("\n".join(["10.0"] * 16))
    k = load_field(p, 4, 4)
    np.testing.assert_array_equal(k, np.full((4, 4), 10.0))
    assert ProblemSpec(nx=4, ny=4, permeability=k).field("permeability").tolist() == [10.0] * 16


def test_small_field_readback(tmp_path):
    f = np.array([[1.5, 2.0], [3.25, 4.0]])
    p = tmp_path / "f.txt"
    write_field(p, f)
    np.testing.assert_array_equal(load_field(p, 2, 2), f)


def test_field_crop(tmp_path):
    f = np.arange(1.0, 21.0).reshape(4, 5)
    p = tmp_path / "f.txt"
    write_field(p, f)
    np.testing.assert_array_equal(load_field(p, 2, 2, offset_x=1, offset_y=2, width=5), f[2:4, 1:3])


def test_field_errors(tmp_path):
    p = tmp_path / "short.txt"
    p.write_text("1 2 3")
    with pytest.raises(ValueError):
        load_field(p, 2, 2)
    q = tmp_path / "neg.txt"
    q.write_text("1 2 -3 4")
    with pytest.raises(ValueError):
        load_field(q, 2, 2)
    with pytest.raises(DimensionMismatch):
        ProblemSpec(nx=3, ny=3, permeability=np.ones((2, 2)))


def test_lognormal_field_spans_four_orders():
    k = lognormal_field(40, 40, seed=0, sigma=2.0)
    assert field_ratio(k) >= 1e4
    P = build_problem(ProblemSpec(nx=40, ny=40, permeability=k, heterogeneity="lognormal", n_s_unknowns=1))
    assert P.metadata["perm_ratio"] == pytest.approx(field_ratio(k))
    assert P.metadata["heterogeneity"] == "lognormal"


# -- front state ---------------------------------------------------------------------

def test_initial_state_all_owg():
    s = ProblemSpec()
    f = front_state(s, 0.0)
    assert all(st_ is CellState.OWG for st_ in f.states)
    np.testing.assert_array_equal(f.temperature, s.t_init)


@pytest.mark.parametrize("n", [10, 20, 40])
def test_high_peclet_front(n):
    s = ProblemSpec(nx=n, ny=n).with_peclet(1e2)
    f = front_state(s, 0.5)
    assert {x for x in f.states} == {CellState.G, CellState.OG, CellState.OWG}
    theta = (f.temperature - s.t_init) / (s.t_inj - s.t_init)
    band = np.unique(np.round(f.xi[(theta > 0.1) & (theta < 0.9)] * (2 * n - 2)))
    assert band.size <= 3


def test_temperature_endpoints():
    s = ProblemSpec()
    f = front_state(s, 0.5)
    assert f.temperature[0] == pytest.approx(s.t_inj, rel=1e-14)
    assert f.temperature[-1] == pytest.approx(s.t_init, rel=1e-14)


# -- matrix structure ----------------------------------------------------------------------

def test_reduced_dimension_with_twelve_components():
    P = build_problem(ProblemSpec(n_components=12))
    assert P.A.shape == (1400, 1400)


def test_determinism():
    s = ProblemSpec(nx=6, ny=6)
    a, b = build_problem(s, seed=3), build_problem(s, seed=3)
    assert np.array_equal(a.A.csr.data, b.A.csr.data)
    assert np.array_equal(a.A.csr.indices, b.A.csr.indices)
    assert np.array_equal(a.b, b.b)


def test_jacobian_matches_finite_differences():
    P = build_problem(ProblemSpec(nx=4, ny=3, n_s_unknowns=2))
    x0 = P.base_vector
    J = P.A.to_dense()
    for j in range(x0.size):
        h = 1e-6 * max(1.0, abs(x0[j]))
        e = np.zeros_like(x0)
        e[j] = h
        col = (P.residual(x0 + e) - P.residual(x0 - e)) / (2 * h)
        scale = max(np.abs(J[:, j]).max(), 1e-12)
        assert np.abs(col - J[:, j]).max() <= 1e-5 * scale, j


def test_rhs_is_negative_residual():
    P = build_problem(ProblemSpec(nx=4, ny=4))
    np.testing.assert_array_equal(P.b, -P.residual(P.base_vector))


def test_flux_rows_are_conservative_in_pressure():
    s = ProblemSpec(nx=6, ny=5, n_s_unknowns=2)
    P = build_problem(s)
    lay = P.layout
    J = P.A.csr
    pcols = lay.indices("P")
    sums = np.asarray(J[:, pcols].sum(axis=1)).ravel()
    g = build_grid(s)
    acc = s.field("porosity") * g.volume / s.dt_days
    S = P.base_vector.reshape(s.n_cells, -1)[:, :2].sum(axis=1)
    prod = s.n_cells - 1
    for c in range(s.n_cells):
        if c == prod:
            continue
        sl = lay.cell_slice(c)
        rows = np.arange(sl.start, sl.stop)
        tags = lay.tags[sl]
        big = np.abs(J[rows].toarray()).max()
        for r, t in zip(rows, tags):
            expected = acc[c] * (1 - S[c]) * s.compressibility if t == "P" else 0.0
            assert abs(sums[r] - expected) <= 1e-12 * big


def test_pressure_block_is_m_matrix_for_uniform_mobility():
    s = ProblemSpec(nx=6, ny=6, time_fraction=0.0)
    P = build_problem(s)
    App = extract_submatrix(P.A, "P", "P").toarray()
    off = App - np.diag(np.diag(App))
    assert (off <= 0).all()
    assert np.all(np.diag(App) >= np.abs(off).sum(axis=1) * (1 - 1e-12))


def test_upwind_reversal_transposes_stencil():
    rng = np.random.default_rng(0)
    left = np.array([0, 1, 2, 0])
    right = np.array([1, 2, 3, 3])
    F = rng.uniform(0.5, 1.0, 4) * rng.choice([-1, 1], 4)
    C = upwind_advection_matrix(4, left, right, F).toarray()
    Cr = upwind_advection_matrix(4, left, right, -F).toarray()
    off = ~np.eye(4, dtype=bool)
    np.testing.assert_array_equal((C != 0) & off, ((Cr != 0) & off).T)


def test_low_peclet_temperature_block_half_plane():
    P = build_problem(ProblemSpec(nx=8, ny=8).with_peclet(1e-6))
    Ctt = extract_submatrix(P.A, "T", "T").toarray()
    radius = np.abs(Ctt).sum(axis=1) - np.abs(np.diag(Ctt))
    assert np.all(np.diag(Ctt) - radius > 0)


def test_secondary_embedding_reproduces_reduced_system():
    P = build_problem(ProblemSpec(nx=6, ny=6, n_components=5), seed=2, with_secondary=True)
    G = P.global_jacobian
    reps = verify_secondary_blocks(G)
    assert all(r.invertible and not r.zero_diagonal for r in reps)
    assert {r.state for r in reps} == {CellState.G, CellState.OG, CellState.OWG}
    R = condense(G)
    ref = P.A.to_dense()
    assert np.abs(R.A.to_dense() - ref).max() <= 1e-10 * np.abs(ref).max()
    assert np.abs(R.b - P.b).max() <= 1e-10 * np.abs(P.b).max()


def test_well_elimination_recovers_reduced_matrix():
    P = build_problem(ProblemSpec(nx=3, ny=3, n_s_unknowns=2))
    W = P.well_system()
    E = eliminate_wells(W)
    ref = P.A.to_dense()
    assert np.abs(E.J.to_dense() - ref).max() <= 1e-12 * np.abs(ref).max()
    full = np.linalg.solve(W.full_matrix(), -W.full_residual())
    red = np.linalg.solve(E.J.to_dense(), -E.r)
    # forward error bounded by conditioning
    bound = 1e-14 * np.linalg.cond(W.full_matrix())
    assert np.linalg.norm(red - full[:-2]) <= bound * np.linalg.norm(full)


def test_spec_validation():
    with pytest.raises(ValueError):
        ProblemSpec(nx=1)
    with pytest.raises(ValueError):
        ProblemSpec(kr_slope=1.0)
    with pytest.raises(ValueError):
        ProblemSpec(n_components=2)
    assert ProblemSpec(n_components=12).with_peclet(1.0).n_s_unknowns == 12


# -- regression baselines ------------------------------------------------------------------

@pytest.mark.parametrize("pe", ["100.0", "1.0", "0.01"])
def test_iteration_baselines_10x10(pe):
    P = build_problem(ProblemSpec().with_peclet(float(pe)))
    for method, its in BASELINES["10x10"][pe].items():
        res, _, _ = solve_system(P.A, P.b, method)
        assert res.converged
        assert res.iterations == its, method
