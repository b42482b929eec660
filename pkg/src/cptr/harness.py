"""Scenario sweeps, iteration reports and file-based system exchange.

Config grammar (INI)::

    [experiment]
    output_dir = out          ; optional
    seed = 0
    tol = 1e-8                ; default for every scenario
    max_iter = 500
    histories = false         ; write one residual-history CSV per scenario

    [scenario homogeneous]    ; any section other than [experiment]
    source = synth            ; synth | files | identity
    methods = cpr-amg, cptr3-amg
    grids = 10x10, 20x20      ; synth only
    pe = 1e2, 1, 1e-2         ; synth only
    heterogeneity = homogeneous   ; or lognormal
    n_components = 12         ; or n_s_unknowns = 2
    heat_capacity = 2000      ; any other ProblemSpec field may be set
    matrix = a.mtx            ; files only, plus layout, rhs, states
    size = 1                  ; identity only

Each section expands to the product methods x grids x pe in that order.
"""
from __future__ import annotations

import configparser
import csv
import io
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import mmio
from .blockmat import BlockMatrix, FieldLayout
from .errors import ConfigError, DimensionMismatch, LayoutError
from .krylov import DEFAULT_MAX_ITER, DEFAULT_TOL, gmres, residual_check
from .stages import build_preconditioner, left_scale, parse_method
from .synth import ProblemSpec, build_problem, lognormal_field

ROW_FIELDS = (
    "scenario", "method", "grid", "heterogeneity", "pe", "matrix_dim", "nnz",
    "iterations", "converged", "final_true_resid", "original_resid", "setup_time", "solve_time", "error",
)
TIMING_FIELDS = ("setup_time", "solve_time")
CV_FIELDS = ("method", "grid", "heterogeneity", "n_pe", "mean_iterations", "cv_percent")


@dataclass
class Scenario:
    name: str
    source: str
    method: str
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    spec: ProblemSpec | None = None
    pe: float = float("nan")
    grid: str = ""
    heterogeneity: str = "homogeneous"
    paths: dict = field(default_factory=dict)
    size: int = 1


@dataclass
class ExperimentConfig:
    scenarios: list
    output_dir: Path | None = None
    seed: int = 0
    histories: bool = False

    def __post_init__(self):
        if not self.scenarios:
            raise ConfigError("configuration has no scenarios")
        for sc in self.scenarios:
            parse_method(sc.method)
            if not 0.0 < sc.tol < 1.0:
                raise ConfigError(f"scenario {sc.name}: tol must lie in (0, 1)")
            if sc.max_iter < 1:
                raise ConfigError(f"scenario {sc.name}: max_iter must be positive")

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        return cls.from_string(text, base_dir=Path(path).parent)

    @classmethod
    def from_string(cls, text: str, base_dir=".") -> "ExperimentConfig":
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        exp = cp["experiment"] if cp.has_section("experiment") else {}
        try:
            tol = float(exp.get("tol", DEFAULT_TOL))
            max_iter = int(exp.get("max_iter", DEFAULT_MAX_ITER))
            seed = int(exp.get("seed", 0))
        except ValueError as exc:
            raise ConfigError(f"[experiment]: {exc}") from exc
        histories = str(exp.get("histories", "false")).strip().lower() in ("1", "true", "yes", "on")
        out = exp.get("output_dir")
        scenarios = []
        for sec in cp.sections():
            if sec == "experiment":
                continue
            label = sec[len("scenario"):].strip() if sec.startswith("scenario ") else sec
            scenarios.extend(_expand_section(label, cp[sec], tol, max_iter, seed, Path(base_dir)))
        return cls(scenarios, Path(base_dir) / out if out else None, seed, histories)


_SPEC_FIELDS = {f.name: f.type for f in fields(ProblemSpec)}
_RESERVED = {"source", "methods", "method", "grids", "grid", "pe", "heterogeneity", "tol", "max_iter",
             "matrix", "layout", "rhs", "states", "size", "sigma", "field_seed"}


def _split(v: str) -> list:
    return [x.strip() for x in v.replace(";", ",").split(",") if x.strip()]


def _parse_grid(g: str):
    try:
        nx, ny = g.lower().split("x")
        return int(nx), int(ny)
    except ValueError:
        raise ConfigError(f"bad grid {g!r}; expected NXxNY") from None


def _coerce(name, value):
    typ = str(_SPEC_FIELDS[name])
    try:
        if "int" in typ and "float" not in typ:
            return None if value.lower() == "none" else int(value)
        if "str" in typ:
            return value
        return float(value)
    except ValueError:
        raise ConfigError(f"bad value {value!r} for {name}") from None


def _expand_section(name, sec, tol, max_iter, seed, base_dir: Path) -> list:
    source = sec.get("source", "synth").strip()
    methods = _split(sec.get("methods", sec.get("method", "")))
    if not methods:
        raise ConfigError(f"[{name}]: no methods given")
    try:
        s_tol = float(sec.get("tol", tol))
        s_max = int(sec.get("max_iter", max_iter))
    except ValueError as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc
    out = []
    if source == "synth":
        grids = [_parse_grid(g) for g in _split(sec.get("grids", sec.get("grid", "10x10")))]
        try:
            pes = [float(p) for p in _split(sec.get("pe", "1"))]
        except ValueError as exc:
            raise ConfigError(f"[{name}]: bad pe list") from exc
        het = sec.get("heterogeneity", "homogeneous").strip()
        if het not in ("homogeneous", "lognormal"):
            raise ConfigError(f"[{name}]: unknown heterogeneity {het!r}")
        extra = {}
        for key, val in sec.items():
            if key in _RESERVED:
                continue
            if key not in _SPEC_FIELDS or key in ("nx", "ny", "permeability", "porosity", "conductivity"):
                raise ConfigError(f"[{name}]: unknown key {key!r}")
            extra[key] = _coerce(key, val)
        sigma = float(sec.get("sigma", 2.0))
        field_seed = int(sec.get("field_seed", seed))
        for m in methods:
            for nx, ny in grids:
                for pe in pes:
                    kw = dict(extra)
                    if het == "lognormal":
                        kw["permeability"] = lognormal_field(nx, ny, seed=field_seed, sigma=sigma)
                    try:
                        spec = ProblemSpec(nx=nx, ny=ny, heterogeneity=het, **kw).with_peclet(pe)
                    except (TypeError, ValueError) as exc:
                        raise ConfigError(f"[{name}]: {exc}") from exc
                    out.append(Scenario(name, source, m, s_tol, s_max, spec, pe, f"{nx}x{ny}", het))
    elif source == "files":
        paths = {}
        for key in ("matrix", "layout", "rhs", "states"):
            if key in sec:
                paths[key] = base_dir / sec[key].strip()
        if not {"matrix", "layout", "rhs"} <= paths.keys():
            raise ConfigError(f"[{name}]: files source needs matrix, layout and rhs")
        for m in methods:
            out.append(Scenario(name, source, m, s_tol, s_max, paths=paths, grid="file", heterogeneity="external"))
    elif source == "identity":
        size = int(sec.get("size", 1))
        for m in methods:
            out.append(Scenario(name, source, m, s_tol, s_max, grid=f"I{size}", heterogeneity="none", size=size))
    else:
        raise ConfigError(f"[{name}]: unknown source {source!r}")
    return out


# -- report -----------------------------------------------------------------------

@dataclass
class IterationReport:
    rows: list = field(default_factory=list)
    histories: dict = field(default_factory=dict)

    def cv_table(self, ddof: int = 1) -> list:
        """CV of iterations across Pe per (method, grid, heterogeneity)."""
        groups: dict = {}
        for r in self.rows:
            if r["error"]:
                continue
            groups.setdefault((r["method"], r["grid"], r["heterogeneity"]), []).append(r["iterations"])
        out = []
        for (m, g, h), its in groups.items():
            cv = compute_cv(its, ddof=ddof) if len(its) > ddof else float("nan")
            out.append({"method": m, "grid": g, "heterogeneity": h, "n_pe": len(its),
                        "mean_iterations": float(np.mean(its)), "cv_percent": cv})
        return out

    @property
    def n_failures(self) -> int:
        return sum(1 for r in self.rows if r["error"])


def compute_cv(values, ddof: int = 1) -> float:
    """Coefficient of variation in percent, ``100 * std / mean``.

    ``ddof=1`` (default) uses the sample standard deviation, ``ddof=0`` the
    population one.
    """
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty value list")
    if v.size <= ddof:
        raise ValueError(f"need more than {ddof} values for ddof={ddof}")
    mean = v.mean()
    if not mean > 0:
        raise ValueError("mean must be positive")
    return float(100.0 * v.std(ddof=ddof) / mean)


@dataclass
class ExternalSystem:
    A: BlockMatrix
    b: np.ndarray
    states: list | None = None
    n_c: int | None = None
    n_s: int | None = None


def ingest_external(matrix_path, layout_path, rhs_path, states_path=None) -> ExternalSystem:
    """Load a Matrix Market system with its layout (and optional state) sidecar."""
    for p in (matrix_path, layout_path, rhs_path, states_path):
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(f"no such file: {p}")
    M = mmio.read_matrix(matrix_path)
    lay = mmio.read_layout(layout_path)
    b = mmio.read_vector(rhs_path)
    if M.shape[0] != lay.n_unknowns:
        raise DimensionMismatch(f"matrix has {M.shape[0]} rows, layout {lay.n_unknowns} unknowns")
    if b.size != lay.n_unknowns:
        raise DimensionMismatch(f"rhs has {b.size} entries, layout {lay.n_unknowns} unknowns")
    states = n_c = n_s = None
    if states_path is not None:
        states, n_c, n_s = mmio.read_states(states_path)
        if len(states) != lay.n_cells:
            raise LayoutError(f"state sidecar has {len(states)} cells, layout {lay.n_cells}")
    return ExternalSystem(BlockMatrix.from_csr(M, lay), b, states, n_c, n_s)


def export_problem(problem, directory, stem: str = "system") -> dict:
    """Write ``<stem>.mtx``, ``<stem>.layout``, ``<stem>.rhs`` and (if known) ``<stem>.states``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {"matrix": d / f"{stem}.mtx", "layout": d / f"{stem}.layout", "rhs": d / f"{stem}.rhs"}
    mmio.write_matrix(paths["matrix"], problem.A)
    mmio.write_layout(paths["layout"], problem.A.layout)
    mmio.write_vector(paths["rhs"], problem.b)
    states = getattr(problem, "states", None)
    if states is not None:
        spec = getattr(problem, "spec", None)
        n_c = getattr(spec, "n_components", None) or getattr(problem, "n_c", None) or 0
        n_s = getattr(spec, "n_solids", None) if spec is not None else (getattr(problem, "n_s", None) or 0)
        paths["states"] = d / f"{stem}.states"
        mmio.write_states(paths["states"], states, n_c, n_s)
    return paths


def solve_system(A: BlockMatrix, b, method: str, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                 amg_options=None):
    """Left-scale, build the preconditioner and run GMRES.

    Returns ``(result, setup_time, original_resid)``; ``result.true_residual``
    is measured on the scaled system GMRES iterates on, ``original_resid`` on
    the unscaled ``A x = b``.
    """
    t0 = time.perf_counter()
    S = left_scale(method, A, b)
    M = build_preconditioner(method, S, amg_options)
    setup = time.perf_counter() - t0
    res = gmres(S.A, S.b, M, tol=tol, max_iter=max_iter)
    return res, setup, residual_check(A, b, res.x)


def _load(sc: Scenario, cache: dict):
    if sc.source == "synth":
        key = (repr(sc.spec), sc.grid)
        if key not in cache:
            cache.clear()
            cache[key] = build_problem(sc.spec)
        P = cache[key]
        return P.A, P.b
    if sc.source == "files":
        key = tuple(sorted((k, str(v)) for k, v in sc.paths.items()))
        if key not in cache:
            cache.clear()
            p = sc.paths
            cache[key] = ingest_external(p["matrix"], p["layout"], p["rhs"], p.get("states"))
        E = cache[key]
        return E.A, E.b
    lay = FieldLayout(np.arange(sc.size), ["P"] * sc.size)
    return BlockMatrix.identity(lay), np.ones(sc.size)


def run_sweep(config: ExperimentConfig) -> IterationReport:
    """Run every scenario in order; failures are recorded as rows, never dropped."""
    report = IterationReport()
    cache: dict = {}
    for k, sc in enumerate(config.scenarios):
        row = {f: "" for f in ROW_FIELDS}
        row.update(scenario=sc.name, method=sc.method, grid=sc.grid, heterogeneity=sc.heterogeneity,
                   pe=sc.pe, matrix_dim=0, nnz=0, iterations=0, converged=False,
                   final_true_resid=float("nan"), original_resid=float("nan"), setup_time=0.0, solve_time=0.0)
        try:
            A, b = _load(sc, cache)
            row.update(matrix_dim=A.shape[0], nnz=A.nnz)
            res, setup, orig = solve_system(A, b, sc.method, sc.tol, sc.max_iter)
            row.update(iterations=res.iterations, converged=bool(res.converged),
                       final_true_resid=res.true_residual, original_resid=orig,
                       setup_time=setup, solve_time=res.wall_time)
            report.histories[k] = res.history
        except Exception as exc:  # recorded per scenario, the sweep goes on
            row["error"] = type(exc).__name__
        report.rows.append(row)
    if config.output_dir is not None:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        emit_report(report, "csv", out / "iterations.csv")
        emit_cv(report, out / "cv.csv")
        emit_report(report, "text", out / "iterations.txt")
        if config.histories:
            hd = out / "histories"
            hd.mkdir(exist_ok=True)
            for k, hist in report.histories.items():
                write_history(hd / f"{k:04d}.csv", hist)
    return report


def write_history(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "prec_resid"])
        for i, v in enumerate(history):
            w.writerow([i, repr(float(v))])


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_csv(report: IterationReport, include_timing: bool = True) -> str:
    cols = [c for c in ROW_FIELDS if include_timing or c not in TIMING_FIELDS]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in report.rows:
        w.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()


def report_text(report: IterationReport) -> str:
    """Iteration table grouped by Pe (outer) and grid (inner), one column per method."""
    methods = list(dict.fromkeys(r["method"] for r in report.rows))
    keys = list(dict.fromkeys((r["pe"], r["grid"], r["heterogeneity"]) for r in report.rows))
    keys.sort(key=lambda k: (-(k[0] if k[0] == k[0] else -np.inf), _grid_key(k[1]), k[2]))
    cells = {}
    dims = {}
    for r in report.rows:
        key = (r["pe"], r["grid"], r["heterogeneity"])
        val = r["error"] or f"{r['iterations']}{'' if r['converged'] else '*'}"
        cells[key + (r["method"],)] = val
        dims[key] = (r["matrix_dim"], r["nnz"])
    head = ["Pe", "grid", "heterogeneity", "dim", "nnz"] + methods
    lines = [head]
    last_pe = None
    for key in keys:
        pe_txt = "" if key[0] == last_pe else f"{key[0]:g}"
        last_pe = key[0]
        lines.append([pe_txt, key[1], key[2], str(dims[key][0]), str(dims[key][1])]
                     + [cells.get(key + (m,), "-") for m in methods])
    widths = [max(len(row[i]) for row in lines) for i in range(len(head))]
    out = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in lines]
    if any(not r["converged"] and not r["error"] for r in report.rows):
        out.append("* not converged within max_iter")
    cv = report.cv_table()
    if cv:
        out.append("")
        out.append("CV across Pe (sample std / mean)")
        for c in cv:
            out.append(f"  {c['method']:<14} {c['grid']:<8} {c['heterogeneity']:<12} "
                       f"mean {c['mean_iterations']:.2f}  CV {c['cv_percent']:.2f}%")
    return "\n".join(out) + "\n"


def _grid_key(g: str):
    try:
        nx, ny = g.split("x")
        return (int(nx) * int(ny), g)
    except ValueError:
        return (0, g)


def emit_report(report: IterationReport, fmt: str = "csv", path=None, include_timing: bool = True) -> str:
    """Render as ``csv`` or ``text``; write to ``path`` when given and return the text."""
    if fmt == "csv":
        text = report_csv(report, include_timing)
    elif fmt in ("text", "text-table"):
        text = report_text(report)
    else:
        raise ConfigError(f"unknown report format {fmt!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def emit_cv(report: IterationReport, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CV_FIELDS)
    for c in report.cv_table():
        w.writerow([_fmt(c[k]) for k in CV_FIELDS])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_report(path) -> IterationReport:
    """Parse a CSV written by :func:`emit_report`."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for k in ROW_FIELDS:
                if k not in rec:
                    continue
                v = rec[k]
                if k in ("matrix_dim", "nnz", "iterations"):
                    row[k] = int(v)
                elif k == "converged":
                    row[k] = v == "true"
                elif k in ("pe", "final_true_resid", "original_resid", "setup_time", "solve_time"):
                    row[k] = float(v)
                else:
                    row[k] = v
            rows.append(row)
    return IterationReport(rows)
