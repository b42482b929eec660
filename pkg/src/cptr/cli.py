"""Command-line entry point: ``cptr {generate,solve,sweep,spectral,report}``."""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import harness
from .errors import ConfigError, DimensionMismatch, LayoutError
from .krylov import DEFAULT_MAX_ITER, DEFAULT_TOL
from .stages import left_scale, parse_method, spectral_diagnostic
from .synth import ProblemSpec, build_problem, lognormal_field

EXIT_OK, EXIT_FAILURES, EXIT_CONFIG = 0, 1, 2


def _grid(text):
    try:
        nx, ny = text.lower().split("x")
        return int(nx), int(ny)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; expected NXxNY") from None


def _add_synth_args(p):
    p.add_argument("--grid", type=_grid, default=(10, 10), help="NXxNY (default 10x10)")
    p.add_argument("--pe", type=float, default=1.0, help="Peclet number (default 1)")
    p.add_argument("--n-components", type=int, default=None)
    p.add_argument("--n-s-unknowns", type=int, default=2)
    p.add_argument("--heterogeneity", choices=("homogeneous", "lognormal"), default="homogeneous")
    p.add_argument("--sigma", type=float, default=2.0, help="log-permeability std for lognormal fields")
    p.add_argument("--seed", type=int, default=0)


def _add_file_args(p):
    p.add_argument("--matrix", type=Path, help="Matrix Market file")
    p.add_argument("--layout", type=Path, help="layout sidecar")
    p.add_argument("--rhs", type=Path, help="right-hand side, one value per line")
    p.add_argument("--states", type=Path, help="optional phase-state sidecar")


def _synth_spec(args) -> ProblemSpec:
    nx, ny = args.grid
    kw = {}
    if args.heterogeneity == "lognormal":
        kw["permeability"] = lognormal_field(nx, ny, seed=args.seed, sigma=args.sigma)
    return ProblemSpec(nx=nx, ny=ny, n_s_unknowns=args.n_s_unknowns, n_components=args.n_components,
                       heterogeneity=args.heterogeneity, **kw).with_peclet(args.pe)


def _load_system(args):
    if args.matrix is not None:
        if args.layout is None or args.rhs is None:
            raise ConfigError("--matrix needs --layout and --rhs")
        E = harness.ingest_external(args.matrix, args.layout, args.rhs, args.states)
        return E.A, E.b
    P = build_problem(_synth_spec(args), seed=args.seed)
    return P.A, P.b


def cmd_generate(args) -> int:
    P = build_problem(_synth_spec(args), seed=args.seed)
    paths = harness.export_problem(P, args.out, args.stem)
    for k, v in paths.items():
        print(f"{k}: {v}")
    print(f"unknowns {P.n_unknowns}  nnz {P.A.nnz}  Pe {P.metadata['pe']:g}")
    return EXIT_OK


def cmd_solve(args) -> int:
    parse_method(args.method)
    A, b = _load_system(args)
    res, setup, orig = harness.solve_system(A, b, args.method, args.tol, args.max_iter)
    if args.history is not None:
        res.write_history(args.history)
    print(f"method {args.method}  dim {A.shape[0]}  nnz {A.nnz}")
    print(f"iterations {res.iterations}  converged {str(res.converged).lower()}")
    print(f"true residual {res.true_residual:.3e}  (unscaled system {orig:.3e})")
    print(f"setup {setup:.3f} s  solve {res.wall_time:.3f} s")
    return EXIT_OK if res.converged else EXIT_FAILURES


def cmd_sweep(args) -> int:
    cfg = harness.ExperimentConfig.from_file(args.config)
    if args.output_dir is not None:
        cfg.output_dir = args.output_dir
    if args.histories:
        cfg.histories = True
    report = harness.run_sweep(cfg)
    sys.stdout.write(harness.emit_report(report, args.format, include_timing=not args.no_timing))
    return EXIT_FAILURES if report.n_failures else EXIT_OK


def cmd_spectral(args) -> int:
    A, b = _load_system(args)
    S = left_scale(args.method, A, b)
    names = [n for n in ("B_PP", "C_TT") if n in S.blocks]
    if args.block != "all":
        names = [n for n in names if n == args.block]
        if not names:
            raise ConfigError(f"block {args.block} is not produced by method {args.method}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in names:
        summ = spectral_diagnostic(S.blocks[name], mode=args.mode)
        print(f"{name}: dim {summ.dimension}  verdict {summ.verdict}  counts {summ.counts()}  "
              f"Re in [{summ.real_min:.4g}, {summ.real_max:.4g}]  {summ.message}".rstrip())
        path = out_dir / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if summ.eigenvalues is not None:
                w.writerow(["index", "real", "imag"])
                for k, ev in enumerate(summ.eigenvalues):
                    w.writerow([k, repr(float(ev.real)), repr(float(ev.imag))])
            else:
                w.writerow(["quantity", "value"])
                for q in ("real_min", "real_max", "sym_min", "sym_max"):
                    w.writerow([q, repr(getattr(summ, q))])
        print(f"  wrote {path}")
    return EXIT_OK


def cmd_report(args) -> int:
    report = harness.read_report(args.input)
    if args.cv:
        text = harness.emit_cv(report, args.output)
    else:
        text = harness.emit_report(report, args.format, args.output)
    if args.output is None:
        sys.stdout.write(text)
    return EXIT_FAILURES if report.n_failures else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cptr", description="Multi-stage preconditioners for thermal reservoir Jacobians.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic system as Matrix Market plus sidecars")
    _add_synth_args(p)
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--stem", default="system")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="solve one system with one method")
    _add_file_args(p)
    _add_synth_args(p)
    p.add_argument("--method", default="cptr3-amg")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--history", type=Path, help="write the residual history CSV here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run a configured scenario sweep")
    p.add_argument("config", type=Path)
    p.add_argument("--output-dir", type=Path)
    p.add_argument("--format", choices=("csv", "text"), default="text")
    p.add_argument("--histories", action="store_true")
    p.add_argument("--no-timing", action="store_true", help="omit timing columns from CSV output")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("spectral", help="eigenvalues of the scaled pressure/temperature blocks")
    _add_file_args(p)
    _add_synth_args(p)
    p.add_argument("--method", default="cptr3-direct")
    p.add_argument("--block", choices=("all", "B_PP", "C_TT"), default="all")
    p.add_argument("--mode", choices=("full_dense", "extremal"), default="full_dense")
    p.add_argument("--out", type=Path, default=Path("."))
    p.set_defaults(func=cmd_spectral)

    p = sub.add_parser("report", help="reformat a sweep CSV")
    p.add_argument("input", type=Path)
    p.add_argument("--format", choices=("csv", "text"), default="text")
    p.add_argument("--cv", action="store_true", help="emit the CV aggregate table instead")
    p.add_argument("--output", type=Path)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "tol", None) is not None and not 0 < args.tol < 1:
        print("error: --tol must lie in (0, 1)", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, LayoutError, DimensionMismatch, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
