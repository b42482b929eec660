import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_block_system
from cptr.blockmat import BlockMatrix, FieldLayout
from cptr.errors import DimensionMismatch
from cptr.krylov import gmres, residual_check
from cptr.stages import build_preconditioner, left_scale
from oracles import random_dd_dense


def test_identity_one_iteration(rng):
    lay = FieldLayout.uniform(7, 0, thermal=False)
    b = rng.standard_normal(7)
    res = gmres(BlockMatrix.identity(lay), b)
    assert res.iterations == 1 and res.converged
    np.testing.assert_allclose(res.x, b, rtol=1e-15)


@given(st.integers(2, 40), st.integers(0, 2**31 - 1))
def test_unpreconditioned_converges_within_n(n, seed):
    rng = np.random.default_rng(seed)
    A = random_dd_dense(n, rng, density=0.5)
    b = rng.standard_normal(n)
    res = gmres(A, b, tol=1e-8)
    assert res.converged
    assert res.iterations <= n
    ref = np.linalg.solve(A, b)
    assert np.linalg.norm(res.x - ref) <= 1e-6 * np.linalg.norm(ref)
    assert res.true_residual <= 1e-8


@given(st.integers(0, 2**31 - 1))
def test_history_non_increasing(seed):
    rng = np.random.default_rng(seed)
    A = random_dd_dense(30, rng, density=0.3) + rng.uniform(-2, 2, (30, 30))
    b = rng.standard_normal(30)
    h = gmres(A, b, tol=1e-10).history
    assert h[0] == 1.0
    assert all(b_ <= a_ + 1e-10 for a_, b_ in zip(h, h[1:]))


def test_exact_inverse_preconditioner_one_iteration(rng):
    A = random_dd_dense(25, rng, density=0.5)
    Ainv = np.linalg.inv(A)
    for _ in range(3):
        res = gmres(A, rng.standard_normal(25), lambda r: Ainv @ r)
        assert res.iterations == 1


def test_zero_rhs():
    res = gmres(np.eye(3), np.zeros(3))
    assert res.converged and res.iterations == 0 and not res.x.any()


def test_max_iter_is_a_data_point():
    A = sps.diags(np.linspace(1.0, 1e6, 200)).tocsr()
    res = gmres(A, np.ones(200), tol=1e-12, max_iter=5)
    assert res.iterations == 5
    assert not res.converged
    assert res.true_residual > 1e-12


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        gmres(np.eye(3), np.ones(4))


def test_residual_check_examples(rng):
    A = random_dd_dense(10, rng)
    x = rng.standard_normal(10)
    b = A @ x
    assert residual_check(A, b, np.linalg.solve(A, b)) <= 1e-15
    assert residual_check(A, b, np.zeros(10)) == 1.0


@pytest.mark.parametrize("method", ["cpr-direct", "cptr-direct", "cptr3-direct"])
def test_scaled_solution_on_unscaled_system(method):
    A, b = random_block_system(20, 2, seed=5)
    S = left_scale(method, A, b)
    res = gmres(S.A, S.b, build_preconditioner(method, S), tol=1e-8)
    assert res.converged
    assert residual_check(A, b, res.x) <= 10 * 1e-8
    plain = gmres(A, b, tol=1e-12)
    assert np.linalg.norm(res.x - plain.x) <= 1e-7 * np.linalg.norm(plain.x)


def test_deterministic_iterates():
    A, b = random_block_system(30, 2, seed=9)
    S = left_scale("cptr3-amg", A, b)
    M = build_preconditioner("cptr3-amg", S)
    r1 = gmres(S.A, S.b, M)
    r2 = gmres(S.A, S.b, M)
    assert np.array_equal(r1.x, r2.x)
    assert r1.history == r2.history


def test_write_history(tmp_path, rng):
    res = gmres(random_dd_dense(8, rng), rng.standard_normal(8))
    p = tmp_path / "h.csv"
    res.write_history(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "iter,prec_resid"
    assert len(lines) == len(res.history) + 1
