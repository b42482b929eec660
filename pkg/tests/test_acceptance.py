"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line.

The lines are also collected in ``conftest.ACCEPTANCE_LINES`` and repeated in
the terminal summary.
"""
import json
import time
from pathlib import Path

import numpy as np
import scipy.sparse as sps

from conftest import ACCEPTANCE_LINES, random_block_system
from cptr.blockmat import BlockMatrix
from cptr.condense import CellState, check_block, condense, ordering_for, random_global_jacobian, secondary_block_from_pattern
from cptr.harness import ExperimentConfig, compute_cv, export_problem, ingest_external, report_csv, run_sweep, solve_system
from cptr.krylov import gmres
from cptr.stages import apply_three_stage, apply_two_stage, build_preconditioner, left_scale
from cptr.subprec import amg_setup, ilu0_apply, ilu0_factor
from cptr.synth import ProblemSpec, build_problem, field_ratio, lognormal_field
from oracles import laplacian_1d, laplacian_2d, random_dd_dense

FIXTURES = Path(__file__).parent / "fixtures"
STATES = [CellState.G, CellState.OG, CellState.OWG]
PES = (1e2, 1.0, 1e-2)


def _record(n, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {title} -- {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_criterion_01_condensation_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    mixed = 0
    for k in range(25):
        n_cells = int(rng.integers(1, 21))
        states = list(rng.choice(STATES, n_cells))
        mixed += len(set(states)) > 1
        G = random_global_jacobian(states, n_c=12, n_s=1, seed=1000 + k)
        R = condense(G)
        delta = R.full_solution(np.linalg.solve(R.A.to_dense(), R.b))
        full = np.linalg.solve(G.J.to_dense(), -G.r)
        worst = max(worst, _rel(delta, full))
    dt = time.perf_counter() - t0
    _record(1, "condensation matches full solve", worst <= 1e-10 and dt < 5.0,
            f"25 systems ({mixed} mixed-state), max rel err {worst:.2e} <= 1e-10, {dt:.2f} s < 5 s")


def test_criterion_02_ordering_soundness():
    sizes = {s.value: (ordering_for(s, 12, 1).n_primary, ordering_for(s, 12, 1).n_secondary) for s in STATES}
    ok_sizes = all(p == 14 for p, _ in sizes.values()) and [q for _, q in sizes.values()] == [1, 13, 14]
    rng = np.random.default_rng(202)
    bad = 0
    for k in range(100):
        part = ordering_for(STATES[k % 3], 12, 1)
        n = part.n_secondary
        vals = rng.uniform(0.5, 2.0, (n, n)) * rng.choice([-1.0, 1.0], (n, n))
        blk = secondary_block_from_pattern(part, vals)
        zero, _, _, _ = check_block(blk, part.secondary)
        bad += bool(zero) or not np.all(np.diag(blk) != 0)
    _record(2, "primary/secondary ordering sizes and J22 diagonals", ok_sizes and bad == 0,
            f"(primary, secondary) = {sizes}; {100 - bad}/100 pattern instances with nonzero diagonals")


def _dense_ops(P, n):
    return [s.dense_operator(n) for s in P.stages]


def test_criterion_03_stage_formula_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    methods = ["cpr-direct", "cpr-amg", "cptr-direct", "cptr3-direct", "cptr3-amg"]
    worst = 0.0
    max_dim = 0
    for k in range(50):
        n_s = int(rng.integers(0, 4))
        nb = n_s + 2
        n_cells = int(rng.integers(1, 200 // nb + 1))
        A, b = random_block_system(n_cells, n_s, seed=3000 + k)
        n = A.shape[0]
        max_dim = max(max_dim, n)
        method = methods[k % len(methods)]
        S = left_scale(method, A, b)
        P = build_preconditioner(method, S)
        Ab = S.A.to_dense()
        Ms = _dense_ops(P, n)
        r = rng.standard_normal(n)
        # explicit composition applied term by term
        if P.n_stages == 2:
            y = apply_two_stage(P, r)
            ref = Ms[0] @ r + Ms[1] @ (r - Ab @ (Ms[0] @ r))
        else:
            y = apply_three_stage(P, r)
            z = r - Ab @ (Ms[0] @ r)
            u = z - Ab @ (Ms[1] @ z)
            ref = Ms[0] @ r + Ms[1] @ z + Ms[2] @ u
        worst = max(worst, _rel(y, ref))
    dt = time.perf_counter() - t0
    _record(3, "two/three-stage application equals explicit composition", worst <= 1e-14 and dt < 5.0,
            f"50 systems up to dim {max_dim}, max rel diff {worst:.2e} <= 1e-14, {dt:.2f} s < 5 s")


def test_criterion_04_scaling_exactness():
    worst = {}
    for method, kw in [("cpr-direct", {}), ("cptr-direct", {}), ("cptr3-direct", {"pp_source": "B"}),
                       ("cptr3-direct", {"pp_source": "A"})]:
        label = method.split("-")[0] + (f"[{kw['pp_source']}]" if kw else "")
        for seed in range(5):
            A, b = random_block_system(50, 2, seed=400 + seed)
            S = left_scale(method, A, b, **kw)
            x = np.linalg.solve(A.to_dense(), b)
            xb = np.linalg.solve(S.A.to_dense(), S.b)
            worst[label] = max(worst.get(label, 0.0), _rel(xb, x))
    ok = max(worst.values()) <= 1e-12
    _record(4, "left scalings preserve the solution", ok,
            "max rel diff " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " <= 1e-12")


def _field_decoupled(A: BlockMatrix) -> BlockMatrix:
    C = A.csr.tocoo()
    tags = np.asarray(A.layout.tags)
    keep = tags[C.row] == tags[C.col]
    M = sps.csr_matrix((C.data[keep], (C.row[keep], C.col[keep])), shape=A.shape)
    return BlockMatrix.from_csr(M, A.layout)


def test_criterion_05_degenerate_exactness():
    its = {}
    for kind in ("cell-decoupled", "field-decoupled"):
        for seed in range(3):
            A, b = random_block_system(10, 1, seed=500 + seed, decoupled=(kind == "cell-decoupled"))
            if kind == "field-decoupled":
                A = _field_decoupled(A)
            for method in ("cpr-direct", "cptr-direct", "cptr3-direct"):
                S = left_scale(method, A, b)
                res = gmres(S.A, S.b, build_preconditioner(method, S))
                its.setdefault(method, set()).add(res.iterations if res.converged else -1)
    ok = all(v == {1} for v in its.values())
    _record(5, "-direct methods exact on decoupled problems", ok,
            "iterations " + ", ".join(f"{m} {sorted(v)}" for m, v in its.items()) + " (expected 1)")


def test_criterion_06_gmres_correctness():
    worst, orig_worst, runs = 0.0, 0.0, 0
    methods = ["ilu0", "cpr-direct", "cpr-amg", "cptr-direct", "cptr3-direct", "cptr3-amg"]
    for pe in PES:
        P = build_problem(ProblemSpec().with_peclet(pe))
        for m in methods:
            res, _, orig = solve_system(P.A, P.b, m)
            if res.converged:
                runs += 1
                worst = max(worst, res.true_residual)
                orig_worst = max(orig_worst, orig)
    for seed in range(6):
        A, b = random_block_system(30, 2, seed=600 + seed)
        for m in methods:
            res, _, orig = solve_system(A, b, m)
            if res.converged:
                runs += 1
                worst = max(worst, res.true_residual)
                orig_worst = max(orig_worst, orig)
    rng = np.random.default_rng(606)
    over = []
    for n in (2, 5, 10, 20, 40, 80):
        A = random_dd_dense(n, rng, density=0.5)
        res = gmres(A, rng.standard_normal(n), tol=1e-8)
        if not res.converged or res.iterations > n:
            over.append(n)
    _record(6, "GMRES true residual and n-step termination", worst <= 1e-8 and not over,
            f"{runs} converged runs, max true rel resid {worst:.2e} <= 1e-8 (unscaled system max "
            f"{orig_worst:.1e}); unpreconditioned runs exceeding n: {over or 'none'}")


def _galerkin_error(H):
    worst = 0.0
    for fine, coarse in zip(H.levels[:-1], H.levels[1:]):
        RAP = (fine.P.T @ fine.A @ fine.P).tocsr()
        D = RAP - coarse.A
        worst = max(worst, sps.linalg.norm(D) / sps.linalg.norm(coarse.A))
    return worst


def test_criterion_07_amg_quality():
    t0 = time.perf_counter()
    rng = np.random.default_rng(707)
    ilu_worst = 0.0
    full = random_dd_dense(60, rng, density=0.3)
    cases = [laplacian_1d(60), np.tril(full), np.triu(full), np.diag(np.diag(full)),
             laplacian_1d(60) + np.diag(rng.uniform(0, 1, 60))]
    for A in cases:
        r = rng.standard_normal(A.shape[0])
        y = ilu0_apply(ilu0_factor(sps.csr_matrix(A)), r)
        ilu_worst = max(ilu_worst, np.linalg.norm(A @ y - r) / np.linalg.norm(r))
    its, gal = {}, 0.0
    for m in (32, 64, 128):
        A = laplacian_2d(m)
        H = amg_setup(A)
        gal = max(gal, _galerkin_error(H))
        res = gmres(A, np.ones(m * m), H, tol=1e-8)
        its[m] = res.iterations if res.converged else 10**9
    H = amg_setup(laplacian_2d(64), max_coarse_size=50)
    gal = max(gal, _galerkin_error(H))
    growth = max(its[64] / its[32], its[128] / its[64])
    dt = time.perf_counter() - t0
    ok = ilu_worst <= 1e-12 and gal <= 1e-13 and its[128] <= 25 and growth <= 1.3 and dt < 60.0
    _record(7, "ILU(0) exactness, Galerkin consistency, AMG scalability", ok,
            f"ILU rel resid {ilu_worst:.1e} <= 1e-12; Galerkin {gal:.1e} <= 1e-13; iterations {its} "
            f"(128^2 <= 25, growth {100 * (growth - 1):.0f}% <= 30%); {dt:.1f} s < 60 s")


def _sweep_40(heterogeneity, methods):
    kw = {}
    if heterogeneity == "lognormal":
        kw["permeability"] = lognormal_field(40, 40, seed=0, sigma=2.0)
    its = {m: [] for m in methods}
    conv = {m: [] for m in methods}
    for pe in PES:
        spec = ProblemSpec(nx=40, ny=40, n_components=12, heterogeneity=heterogeneity, **kw).with_peclet(pe)
        P = build_problem(spec)
        for m in methods:
            res, _, _ = solve_system(P.A, P.b, m, max_iter=500)
            its[m].append(res.iterations)
            conv[m].append(res.converged)
    return its, conv, kw


def test_criterion_08_peclet_robustness():
    t0 = time.perf_counter()
    its, conv, _ = _sweep_40("homogeneous", ["cpr-amg", "cptr3-amg", "cpr-direct", "cptr-direct"])
    dt = time.perf_counter() - t0
    cv_cpr, cv_cptr3 = compute_cv(its["cpr-amg"]), compute_cv(its["cptr3-amg"])
    a = cv_cptr3 < cv_cpr
    b = its["cptr3-amg"][2] <= 0.6 * its["cpr-amg"][2]
    c = all(x <= y for x, y in zip(its["cptr-direct"], its["cpr-direct"]))
    ok = a and b and c and all(all(v) for v in conv.values()) and dt < 300.0
    _record(8, "Peclet robustness ordering on 40x40", ok,
            f"iterations at Pe {list(PES)}: {its}; (a) CV {cv_cptr3:.1f}% < {cv_cpr:.1f}% {a}; "
            f"(b) {its['cptr3-amg'][2]} <= 0.6*{its['cpr-amg'][2]} {b}; (c) {c}; {dt:.0f} s < 300 s")


def test_criterion_09_heterogeneity_robustness():
    its, conv, kw = _sweep_40("lognormal", ["cpr-amg", "cptr3-amg"])
    ratio = field_ratio(kw["permeability"])
    m_cpr, m_cptr3 = np.mean(its["cpr-amg"]), np.mean(its["cptr3-amg"])
    ok = ratio >= 1e4 and all(conv["cptr3-amg"]) and max(its["cptr3-amg"]) <= 500 and m_cptr3 < m_cpr
    _record(9, "lognormal heterogeneity on 40x40", ok,
            f"k_max/k_min {ratio:.1e}; iterations {its}; converged cptr3-amg {conv['cptr3-amg']}; "
            f"mean {m_cptr3:.2f} < {m_cpr:.2f}")


def test_criterion_10_cv_arithmetic():
    ref = json.loads((FIXTURES / "reference_80x80.json").read_text())
    got = {m: compute_cv(v) for m, v in ref["iterations"].items()}
    diffs = {m: abs(got[m] - ref["expected_cv_percent"][m]) for m in got}
    _record(10, "CV of the 80x80 reference iteration data", max(diffs.values()) <= 0.5,
            ", ".join(f"{m} {got[m]:.2f}% vs {ref['expected_cv_percent'][m]}%" for m in got) + " (within 0.5)")


SWEEP = """
[experiment]
seed = 7
[scenario homogeneous]
methods = cpr-amg, cptr3-amg
grids = 6x6
pe = 1e2, 1e-2
[scenario lognormal]
methods = cptr3-amg
grids = 8x8
pe = 1
heterogeneity = lognormal
"""


def test_criterion_11_round_trip_and_determinism(tmp_path):
    P = build_problem(ProblemSpec(nx=8, ny=8, n_components=4).with_peclet(1e-2))
    paths = export_problem(P, tmp_path, "sys")
    E = ingest_external(paths["matrix"], paths["layout"], paths["rhs"], paths["states"])
    same = {}
    for m in ("ilu0", "cpr-amg", "cptr-direct", "cptr3-amg"):
        a, _, _ = solve_system(P.A, P.b, m)
        b, _, _ = solve_system(E.A, E.b, m)
        same[m] = (a.iterations, b.iterations)
    rt = all(x == y for x, y in same.values())
    first = report_csv(run_sweep(ExperimentConfig.from_string(SWEEP)), include_timing=False)
    second = report_csv(run_sweep(ExperimentConfig.from_string(SWEEP)), include_timing=False)
    det = first.encode() == second.encode()
    _record(11, "export/ingest round trip and sweep determinism", rt and det,
            f"iterations (in-memory, ingested) {same}; timing-free sweep CSVs byte-identical {det}")
