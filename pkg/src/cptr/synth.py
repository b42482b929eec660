"""Desk-scale coupled flow/heat Jacobians on a 2D quarter-five-spot grid.

The model is a structural stand-in for a thermal-compositional simulator:

* ``m`` transported species fractions ``a_k`` (the ``s`` unknowns), carried
  by one mobile phase with first-order upwinding and no diffusion;
* a carrier mass balance with a small compressibility (the ``P`` row),
  whose sum with the species rows is the elliptic total-volume balance;
* an energy balance (the ``T`` row) with upwind enthalpy advection, a
  symmetric conduction stencil and rock heat accumulation.

Mobility ``lambda = (1 - beta sum a) / mu(T)`` with
``mu(T) = mu_ref exp(-gamma (T - T_ref))`` ties temperature to flow.
``beta <= 0.5`` keeps every species flux ``a_k lambda`` increasing in ``a_k``. Face
fluxes use two-point transmissibilities with harmonic permeability means and
upwind directions frozen at the base state (a Picard linearization), so the
residual is smooth and its analytic Jacobian can be checked by finite
differences.

Units: m, day, bar, K, kJ. The slab thickness equals the domain length, so
for square cells the ratio of face advection ``q rho c_p`` to face
conduction ``kappa L`` is exactly the thermal Peclet number.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.ndimage import gaussian_filter
from scipy.special import erfc

from .blockmat import BlockMatrix, FieldLayout
from .condense import (
    CellState,
    GlobalJacobian,
    ReservoirSystem,
    WellCoupledJacobian,
    coupling_pattern,
    full_layout,
    local_pattern,
    ordering_for,
)
from .errors import DimensionMismatch

#: D * m / cP * bar -> m^3/day  (9.869233e-13 m^2/D * 1e5 Pa/bar / 1e-3 Pa s/cP * 86400 s/day)
DARCY = 9.869233e-13 * 1e5 / 1e-3 * 86400.0
SECONDS_PER_DAY = 86400.0


@dataclass
class ProblemSpec:
    nx: int = 10
    ny: int = 10
    length: float = 0.35
    porosity: object = 0.36
    #: Darcy; scalar or (ny, nx) array
    permeability: object = 10.0
    #: kJ/m/day/K
    conductivity: float = 50.0
    #: m^3/day
    injection_rate: float = 4.32
    t_inj: float = 873.15
    t_init: float = 323.15
    p_init: float = 7.8
    s_oil: float = 0.4791
    s_water: float = 0.2048
    #: carrier density (kg/m^3) and heat capacity (kJ/kg/K)
    rho: float = 3.1
    cp: float = 1.42
    #: volumetric heat capacity of rock plus fluids, kJ/m^3/K
    heat_capacity: float = 2000.0
    n_s_unknowns: int = 2
    #: when set, ``n_s_unknowns = n_components + n_solids - 1``
    n_components: int | None = None
    n_solids: int = 1
    dt_days: float = 10.0 / SECONDS_PER_DAY
    mu_cold: float = 1.0e4
    mu_hot: float = 10.0
    compressibility: float = 1.0e-4
    #: relative-mobility slope beta; at most 0.5 for monotone species fluxes
    kr_slope: float = 0.5
    time_fraction: float = 0.5
    og_width: float = 0.15
    front_width: float = 0.3
    heterogeneity: str = "homogeneous"
    tag: str = ""

    def __post_init__(self):
        if self.n_components is not None:
            if self.n_components < 3:
                raise ValueError("n_components must be at least 3")
            self.n_s_unknowns = self.n_components + self.n_solids - 1
        if self.nx < 2 or self.ny < 2:
            raise ValueError("nx and ny must be at least 2")
        if self.n_s_unknowns < 0:
            raise ValueError("n_s_unknowns must be non-negative")
        for name in ("length", "injection_rate", "rho", "heat_capacity", "dt_days", "mu_cold", "mu_hot",
                     "t_inj", "t_init", "p_init"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.conductivity < 0 or self.cp < 0 or self.compressibility < 0:
            raise ValueError("conductivity, cp and compressibility must be non-negative")
        if min(self.s_oil, self.s_water) < 0 or self.s_oil + self.s_water > 1:
            raise ValueError("saturations must lie in [0, 1] and sum to at most 1")
        if not 0.0 <= self.time_fraction <= 1.0:
            raise ValueError("time_fraction must lie in [0, 1]")
        if not 0.0 <= self.kr_slope < 1.0:
            raise ValueError("kr_slope must lie in [0, 1)")
        for name in ("porosity", "permeability"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.ndim and v.shape != (self.ny, self.nx):
                raise DimensionMismatch(f"{name} field has shape {v.shape}, expected {(self.ny, self.nx)}")
            if np.any(v <= 0):
                raise ValueError(f"{name} must be strictly positive")
        if np.any(np.asarray(self.porosity) > 1):
            raise ValueError("porosity must not exceed 1")

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def dx(self) -> float:
        return self.length / self.nx

    @property
    def dy(self) -> float:
        return self.length / self.ny

    @property
    def thickness(self) -> float:
        return self.length

    def field(self, name) -> np.ndarray:
        """Cell values (row-major, length ``nx * ny``) of a scalar or array field."""
        return np.broadcast_to(np.asarray(getattr(self, name), dtype=np.float64), (self.ny, self.nx)).ravel().copy()

    def conductivity_for(self, pe: float) -> float:
        """Conductivity that gives Peclet number ``pe`` with all else fixed."""
        return self.injection_rate * self.rho * self.cp / (pe * self.length)

    def with_peclet(self, pe: float) -> "ProblemSpec":
        return replace(self, conductivity=self.conductivity_for(pe))


def peclet(spec: ProblemSpec) -> float:
    """``Pe = q rho c_p / (kappa L)``; infinite without conduction."""
    if spec.length <= 0:
        raise ValueError("length must be positive")
    num = spec.injection_rate * spec.rho * spec.cp
    if spec.conductivity == 0:
        return float("inf") if num > 0 else 0.0
    return num / (spec.conductivity * spec.length)


# -- fields ---------------------------------------------------------------------

def load_field(path, nx: int, ny: int, offset_x: int = 0, offset_y: int = 0, width: int | None = None) -> np.ndarray:
    """Read a row-major scalar field and return its ``(ny, nx)`` crop.

    The file holds whitespace-separated reals for a grid ``width`` cells wide
    (default ``nx``); the crop starts at ``(offset_x, offset_y)``.
    """
    vals = np.loadtxt(str(path), dtype=np.float64).ravel() if _nonempty(path) else np.zeros(0)
    width = nx if width is None else width
    need = (offset_y + ny) * width
    if offset_x + nx > width:
        raise ValueError("crop window exceeds the field width")
    if vals.size < need:
        raise ValueError(f"field file {path} holds {vals.size} values, need at least {need}")
    if np.any(vals[:need] <= 0):
        raise ValueError(f"field file {path} contains non-positive values")
    grid = vals[:need].reshape(offset_y + ny, width)
    return grid[offset_y:offset_y + ny, offset_x:offset_x + nx].copy()


def _nonempty(path) -> bool:
    with open(path) as fh:
        return bool(fh.read().strip())


def lognormal_field(nx: int, ny: int, seed=0, mean: float = 10.0, sigma: float = 2.0,
                    correlation: float = 3.0) -> np.ndarray:
    """Smooth lognormal field with geometric mean ``mean``.

    A white-noise field is Gaussian-filtered (``correlation`` cells),
    standardized and exponentiated: ``mean * exp(sigma * z)``.
    """
    rng = np.random.default_rng(seed)
    z = gaussian_filter(rng.standard_normal((ny, nx)), correlation, mode="wrap")
    z = (z - z.mean()) / z.std()
    return mean * np.exp(sigma * z)


def field_ratio(f) -> float:
    f = np.asarray(f)
    return float(f.max() / f.min())


def write_field(path, f) -> None:
    np.savetxt(str(path), np.asarray(f).reshape(-1, np.asarray(f).shape[-1]), fmt="%.17g")


# -- base state -----------------------------------------------------------------

@dataclass
class FrontState:
    states: list
    temperature: np.ndarray
    fractions: np.ndarray
    #: normalized distance from the injector along the diagonal
    xi: np.ndarray
    front_position: float
    front_width: float


def _diagonal_coordinate(spec: ProblemSpec) -> np.ndarray:
    j, i = np.divmod(np.arange(spec.n_cells), spec.nx)
    return (i + j) / (spec.nx + spec.ny - 2)


def _erfc_profile(xi, xf, w):
    g = 0.5 * erfc((xi - xf) / w)
    g0, g1 = 0.5 * erfc((0.0 - xf) / w), 0.5 * erfc((1.0 - xf) / w)
    return (g - g1) / (g0 - g1)


def front_state(spec: ProblemSpec, time_fraction: float | None = None) -> FrontState:
    """Traveling-front base state along the injector-producer diagonal.

    Zones: G upstream of the front minus ``og_width``, OG up to the front,
    OWG beyond. Temperature follows a normalized error-function profile from
    ``t_inj`` at the injector to ``t_init`` at the producer with width
    ``front_width * sqrt(time_fraction / Pe)`` (at least half a cell).
    Species fractions drop from the initial liquid saturation downstream to a
    small residual upstream across a sharp (two-cell) front.
    """
    tf = spec.time_fraction if time_fraction is None else time_fraction
    if not 0.0 <= tf <= 1.0:
        raise ValueError("time_fraction must lie in [0, 1]")
    xi = _diagonal_coordinate(spec)
    cell = 1.0 / (spec.nx + spec.ny - 2)
    pe = peclet(spec)
    w = max(spec.front_width * np.sqrt(tf / pe) if np.isfinite(pe) and pe > 0 else 0.0, 0.5 * cell)
    if pe == 0:
        w = 1e3
    xf = tf
    states = []
    for v in xi:
        if v < xf - spec.og_width:
            states.append(CellState.G)
        elif v < xf:
            states.append(CellState.OG)
        else:
            states.append(CellState.OWG)
    if tf == 0.0:
        T = np.full(spec.n_cells, spec.t_init)
        h = np.ones(spec.n_cells)
    else:
        T = spec.t_init + (spec.t_inj - spec.t_init) * _erfc_profile(xi, xf, w)
        h = 1.0 - _erfc_profile(xi, xf, 2.0 * cell)
    m = spec.n_s_unknowns
    s_liq = spec.s_oil + spec.s_water
    weights = 1.0 / np.arange(1, m + 1) if m else np.zeros(0)
    weights = weights / weights.sum() if m else weights
    residual = 0.03
    total = residual + (s_liq - residual) * h
    fractions = total[:, None] * weights[None, :]
    return FrontState(states, T, fractions, xi, xf, w)


# -- grid and fluxes ------------------------------------------------------------

@dataclass
class Grid:
    nx: int
    ny: int
    left: np.ndarray
    right: np.ndarray
    trans: np.ndarray
    cond: np.ndarray
    volume: float


def build_grid(spec: ProblemSpec) -> Grid:
    """Interior faces with harmonic-mean transmissibilities and conduction coefficients."""
    nx, ny = spec.nx, spec.ny
    k = spec.field("permeability")
    idx = np.arange(nx * ny).reshape(ny, nx)
    H = spec.thickness
    lx, rx = idx[:, :-1].ravel(), idx[:, 1:].ravel()
    ly, ry = idx[:-1, :].ravel(), idx[1:, :].ravel()
    geo_x = spec.dy * H / spec.dx
    geo_y = spec.dx * H / spec.dy
    left = np.concatenate([lx, ly])
    right = np.concatenate([rx, ry])
    geo = np.concatenate([np.full(lx.size, geo_x), np.full(ly.size, geo_y)])
    kh = 2.0 * k[left] * k[right] / (k[left] + k[right])
    return Grid(nx, ny, left, right, DARCY * kh * geo, spec.conductivity * geo, spec.dx * spec.dy * H)


def upwind_advection_matrix(n: int, left, right, flux) -> sps.csr_matrix:
    """Upwind operator ``(C a)_i = sum_faces (+/-) F_f a_up(f)`` for face fluxes ``F`` (left -> right)."""
    up = np.where(flux >= 0, left, right)
    rows = np.concatenate([left, right])
    cols = np.concatenate([up, up])
    vals = np.concatenate([flux, -flux])
    return sps.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _well_index(spec: ProblemSpec, k_cell: float) -> float:
    # corner well, quarter of a full-cell Peaceman well; well radius fixed at a
    # tenth of the equivalent radius
    return DARCY * 0.25 * 2.0 * np.pi * k_cell * spec.thickness / np.log(10.0)


class _Model:
    """Residual and Jacobian of the stand-in model with frozen upwinding."""

    def __init__(self, spec: ProblemSpec, base: FrontState, old: FrontState):
        self.spec = spec
        self.grid = build_grid(spec)
        self.n = spec.n_cells
        self.m = spec.n_s_unknowns
        self.phi = spec.field("porosity")
        k = spec.field("permeability")
        self.gamma = np.log(spec.mu_cold / spec.mu_hot) / (spec.t_inj - spec.t_init)
        self.inj, self.prod = 0, self.n - 1
        self.wi_inj = _well_index(spec, k[self.inj])
        self.wi_prod = _well_index(spec, k[self.prod])
        self.lam_inj = self.mobility(np.zeros((1, self.m)), np.array([spec.t_inj]))[0][0]
        self.base, self.old = base, old
        self.P = self._steady_pressure(base)
        self.P_inj_well = self.P[self.inj] + spec.injection_rate / (self.wi_inj * self.lam_inj)

    # constitutive relations
    def mobility(self, a, T):
        S = a.sum(axis=1)
        inv_mu = np.exp(self.gamma * (T - self.spec.t_init)) / self.spec.mu_cold
        beta = self.spec.kr_slope
        lam = (1.0 - beta * S) * inv_mu
        dlam_dS = -beta * inv_mu
        return lam, dlam_dS, self.gamma * lam

    def _steady_pressure(self, st: FrontState):
        """Incompressible single-phase pressure at the base state (Picard on upwinding)."""
        g, n, spec = self.grid, self.n, self.spec
        lam = self.mobility(st.fractions, st.temperature)[0]
        up = g.left.copy()
        P = np.full(n, spec.p_init)
        for _ in range(50):
            G = g.trans * lam[up]
            A = sps.csr_matrix((np.concatenate([G, G, -G, -G]),
                                (np.concatenate([g.left, g.right, g.left, g.right]),
                                 np.concatenate([g.left, g.right, g.right, g.left]))), shape=(n, n)).tolil()
            rhs = np.zeros(n)
            rhs[self.inj] += spec.injection_rate
            wp = self.wi_prod * lam[self.prod]
            A[self.prod, self.prod] += wp
            rhs[self.prod] += wp * spec.p_init
            P = spla.spsolve(A.tocsc(), rhs)
            new_up = np.where(P[g.left] >= P[g.right], g.left, g.right)
            if np.array_equal(new_up, up):
                break
            up = new_up
        self.up = up
        return P

    # packing
    def pack(self, a, P, T):
        return np.column_stack([a, P, T]).ravel()

    def unpack(self, x):
        X = np.asarray(x).reshape(self.n, self.m + 2)
        return X[:, :self.m], X[:, self.m], X[:, self.m + 1]

    def base_vector(self):
        return self.pack(self.base.fractions, self.P, self.base.temperature)

    def residual(self, x):
        spec, g = self.spec, self.grid
        a, P, T = self.unpack(x)
        a0, T0 = self.old.fractions, self.old.temperature
        S, S0 = a.sum(axis=1), a0.sum(axis=1)
        lam = self.mobility(a, T)[0]
        acc = self.phi * g.volume / spec.dt_days
        up = self.up
        F = g.trans * lam[up] * (P[g.left] - P[g.right])
        Fp = self.wi_prod * lam[self.prod] * (P[self.prod] - spec.p_init)
        hcp = spec.rho * spec.cp
        Rs = acc[:, None] * (a - a0)
        RP = acc * ((1.0 - S) * (1.0 + spec.compressibility * (P - self.P)) - (1.0 - S0))
        RT = g.volume * spec.heat_capacity / spec.dt_days * (T - T0)

        def add_flux(R, q):
            np.add.at(R, g.left, F * q[up] if R.ndim == 1 else (F[:, None] * q[up]))
            np.subtract.at(R, g.right, F * q[up] if R.ndim == 1 else (F[:, None] * q[up]))

        add_flux(Rs, a)
        add_flux(RP, 1.0 - S)
        add_flux(RT, hcp * (T - spec.t_init))
        dT = T[g.left] - T[g.right]
        np.add.at(RT, g.left, g.cond * dT)
        np.subtract.at(RT, g.right, g.cond * dT)
        p = self.prod
        Rs[p] += Fp * a[p]
        RP[p] += Fp * (1.0 - S[p])
        RT[p] += Fp * hcp * (T[p] - spec.t_init)
        RP[self.inj] -= spec.injection_rate
        RT[self.inj] -= spec.injection_rate * hcp * (spec.t_inj - spec.t_init)
        return self.pack(Rs, RP, RT)

    def jacobian(self, x) -> sps.csr_matrix:
        spec, g, m = self.spec, self.grid, self.m
        nb = m + 2
        a, P, T = self.unpack(x)
        S = a.sum(axis=1)
        lam, lam_S, lam_T = self.mobility(a, T)
        acc = self.phi * g.volume / spec.dt_days
        hcp = spec.rho * spec.cp
        up = self.up
        dP = P[g.left] - P[g.right]
        F = g.trans * lam[up] * dP
        G = g.trans * lam[up]
        F_S = g.trans * lam_S[up] * dP
        F_T = g.trans * lam_T[up] * dP
        rows, cols, vals = [], [], []

        def add(r, c, v):
            r, c, v = np.broadcast_arrays(np.asarray(r), np.asarray(c), np.asarray(v, dtype=np.float64))
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(v.ravel())

        iP, iT = m, m + 1
        cells = np.arange(self.n)
        # accumulation
        for k in range(m):
            add(cells * nb + k, cells * nb + k, acc)
            add(cells * nb + iP, cells * nb + k, -acc * (1.0 + spec.compressibility * (P - self.P)))
        add(cells * nb + iP, cells * nb + iP, acc * (1.0 - S) * spec.compressibility)
        add(cells * nb + iT, cells * nb + iT, g.volume * spec.heat_capacity / spec.dt_days)

        def flux_terms(row_off, q, dq_da, dq_dT, cell_rows, sign, Fv, Gv, FS, FT, pcols_l, pcols_r, ucell):
            # d(F q_u) = q_u dF + F dq_u
            rr = cell_rows * nb + row_off
            add(rr, pcols_l * nb + iP, sign * q * Gv)
            if pcols_r is not None:
                add(rr, pcols_r * nb + iP, -sign * q * Gv)
            for j in range(m):
                add(rr, ucell * nb + j, sign * (q * FS + Fv * dq_da[j]))
            add(rr, ucell * nb + iT, sign * (q * FT + Fv * dq_dT))

        zeros = np.zeros_like(F)
        for sign, rcell in ((1.0, g.left), (-1.0, g.right)):
            for k in range(m):
                dq = [np.ones_like(F) if j == k else zeros for j in range(m)]
                flux_terms(k, a[up, k], dq, zeros, rcell, sign, F, G, F_S, F_T, g.left, g.right, up)
            flux_terms(iP, 1.0 - S[up], [-np.ones_like(F)] * m, zeros, rcell, sign, F, G, F_S, F_T,
                       g.left, g.right, up)
            flux_terms(iT, hcp * (T[up] - spec.t_init), [zeros] * m, hcp * np.ones_like(F), rcell, sign,
                       F, G, F_S, F_T, g.left, g.right, up)
        # conduction
        add(g.left * nb + iT, g.left * nb + iT, g.cond)
        add(g.right * nb + iT, g.right * nb + iT, g.cond)
        add(g.left * nb + iT, g.right * nb + iT, -g.cond)
        add(g.right * nb + iT, g.left * nb + iT, -g.cond)
        # producer
        p = np.array([self.prod])
        dPp = P[p] - spec.p_init
        Fp, Gp = self.wi_prod * lam[p] * dPp, self.wi_prod * lam[p]
        FpS, FpT = self.wi_prod * lam_S[p] * dPp, self.wi_prod * lam_T[p] * dPp
        zp = np.zeros(1)
        for k in range(m):
            dq = [np.ones(1) if j == k else zp for j in range(m)]
            flux_terms(k, a[p, k], dq, zp, p, 1.0, Fp, Gp, FpS, FpT, p, None, p)
        flux_terms(iP, 1.0 - S[p], [-np.ones(1)] * m, zp, p, 1.0, Fp, Gp, FpS, FpT, p, None, p)
        flux_terms(iT, hcp * (T[p] - spec.t_init), [zp] * m, hcp * np.ones(1), p, 1.0, Fp, Gp, FpS, FpT,
                   p, None, p)
        N = self.n * nb
        J = sps.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
        J.sum_duplicates()
        return J

    def injector_terms(self):
        """Couplings of the (rate-controlled) injector bottom-hole pressure."""
        spec, nb = self.spec, self.m + 2
        w = self.wi_inj * self.lam_inj
        pi, ti = self.inj * nb + self.m, self.inj * nb + self.m + 1
        dh = spec.rho * spec.cp * (spec.t_inj - spec.t_init)
        return pi, ti, w, dh


@dataclass
class SyntheticJacobian:
    """Reduced system ``A x = b`` plus states, metadata and optional extras."""

    A: BlockMatrix
    b: np.ndarray
    states: list
    spec: ProblemSpec
    metadata: dict = field(default_factory=dict)
    global_jacobian: GlobalJacobian | None = None
    base_vector: np.ndarray | None = None
    _model: object = field(default=None, repr=False)

    @property
    def layout(self) -> FieldLayout:
        return self.A.layout

    @property
    def n_unknowns(self) -> int:
        return self.A.shape[0]

    def residual(self, x) -> np.ndarray:
        return self._model.residual(x)

    def well_system(self) -> WellCoupledJacobian:
        """Reservoir system bordered by both wells; eliminating them gives ``A`` back.

        The injector is rate-controlled (its bottom-hole pressure is unknown);
        the producer is pressure-controlled (``p_w - p_target = 0``).
        """
        mod = self._model
        n = self.n_unknowns
        nb = mod.m + 2
        pi, ti, w, dh = mod.injector_terms()
        csr = self.A.csr.tolil()
        csr[pi, pi] += w
        csr[ti, pi] += dh * w
        J_res = BlockMatrix.from_csr(csr.tocsr(), self.layout)
        J_rw = np.zeros((n, 2))
        J_wr = np.zeros((2, n))
        J_rw[pi, 0] = -w
        J_rw[ti, 0] = -dh * w
        J_wr[0, pi] = -w
        lam, _, _ = mod.mobility(mod.base.fractions[[mod.prod]], mod.base.temperature[[mod.prod]])
        wp = mod.wi_prod * lam[0]
        a_p = mod.base.fractions[mod.prod]
        rows = mod.prod * nb + np.arange(nb)
        q = np.concatenate([a_p, [1.0 - a_p.sum()],
                            [self.spec.rho * self.spec.cp * (mod.base.temperature[mod.prod] - self.spec.t_init)]])
        J_rw[rows, 1] = -wp * q
        J_ww = np.diag([w, 1.0])
        base = ReservoirSystem(J_res, -self.b.copy())
        return WellCoupledJacobian(base, (mod.inj, mod.prod), J_rw, J_wr, J_ww, np.zeros(2))


def build_problem(spec: ProblemSpec, seed=0, with_secondary: bool = False, secondary_scale: float = 0.05,
                  dtf: float = 0.02) -> SyntheticJacobian:
    """Linearized system at the traveling-front state for ``spec``.

    The right-hand side is ``-R`` with the old state taken at
    ``time_fraction - dtf``. With ``with_secondary`` the primary system is
    embedded into a full primary + secondary Jacobian (requires
    ``n_components``) whose static condensation reproduces ``A``.
    """
    base = front_state(spec)
    old = front_state(spec, max(spec.time_fraction - dtf, 0.0))
    mod = _Model(spec, base, old)
    x0 = mod.base_vector()
    lay = FieldLayout.uniform(spec.n_cells, spec.n_s_unknowns)
    J = mod.jacobian(x0)
    A = BlockMatrix.from_csr(J, lay)
    b = -mod.residual(x0)
    perm = spec.field("permeability")
    meta = {
        "pe": peclet(spec),
        "grid": f"{spec.nx}x{spec.ny}",
        "heterogeneity": spec.heterogeneity,
        "perm_ratio": field_ratio(perm),
        "n_unknowns": A.shape[0],
        "nnz": A.nnz,
        "seed": seed,
        "front_width": base.front_width,
    }
    out = SyntheticJacobian(A, b, base.states, spec, meta, None, x0, mod)
    if with_secondary:
        out.global_jacobian = embed_secondary(out, seed, secondary_scale)
    return out


def embed_secondary(P: SyntheticJacobian, seed=0, scale: float = 0.05) -> GlobalJacobian:
    """Full Jacobian whose condensation gives back ``P.A`` and ``P.b``.

    Secondary blocks follow the structural patterns of each cell state with
    random diagonally dominant values; ``J12`` couples cell equations to the
    secondary unknowns of the cell and (flux rows) of its neighbours. ``J11``
    and ``r1`` are then chosen as ``A + J12 J22^{-1} J21`` and
    ``-b + J12 J22^{-1} r2``.
    """
    spec = P.spec
    if spec.n_components is None:
        raise ValueError("secondary embedding needs n_components")
    rng = np.random.default_rng(seed)
    parts = [ordering_for(s, spec.n_components, spec.n_solids) for s in P.states]
    n = spec.n_cells
    n_pri = np.array([p.n_primary for p in parts])
    n_sec = np.array([p.n_secondary for p in parts])
    prim_ptr = np.concatenate([[0], np.cumsum(n_pri)])
    sec_ptr = np.concatenate([[0], np.cumsum(n_sec)])
    full_ptr = np.concatenate([[0], np.cumsum(n_pri + n_sec)])
    # reduced (s..., P, T) position k of cell c sits at primary slot order_c[k]
    prim_of_red = []
    for c, p in enumerate(parts):
        tags = p.primary_tags()
        order = [k for k, t in enumerate(tags) if t == "s"] + [tags.index("P"), tags.index("T")]
        prim_of_red.append(prim_ptr[c] + np.array(order))
    prim_of_red = np.concatenate(prim_of_red)

    A = P.A.csr
    row_mag = np.empty(prim_ptr[-1])
    row_mag[prim_of_red] = abs(A).max(axis=1).toarray().ravel()
    g = build_grid(spec)
    nbrs = [[] for _ in range(n)]
    for l_, r_ in zip(g.left, g.right):
        nbrs[l_].append(int(r_))
        nbrs[r_].append(int(l_))

    b22, b21, rows12, cols12, vals12 = [], [], [], [], []
    for c, p in enumerate(parts):
        pat = local_pattern(p)
        npri, nsec = p.n_primary, p.n_secondary
        sub = pat[npri:, npri:]
        blk = np.where(sub, rng.uniform(0.5, 2.0, sub.shape) * rng.choice([-1.0, 1.0], sub.shape), 0.0)
        np.fill_diagonal(blk, np.abs(blk).sum(axis=1) + rng.uniform(0.5, 2.0, nsec))
        b22.append(blk)
        b21.append(np.where(pat[npri:, :npri], rng.uniform(-2.0, 2.0, (nsec, npri)), 0.0))
        for cc in [c] + nbrs[c]:
            cpat = pat[:npri, npri:] if cc == c else coupling_pattern(p, parts[cc])[:npri, parts[cc].n_primary:]
            rr, kk = np.nonzero(cpat)
            rows12.append(prim_ptr[c] + rr)
            cols12.append(sec_ptr[cc] + kk)
            vals12.append(rng.uniform(0.5, 2.0, rr.size) * scale * row_mag[prim_ptr[c] + rr])
    J12 = sps.csr_matrix((np.concatenate(vals12), (np.concatenate(rows12), np.concatenate(cols12))),
                         shape=(prim_ptr[-1], sec_ptr[-1]))
    J21 = sps.block_diag(b21, format="csr")
    J22 = sps.block_diag(b22, format="csr")
    J22inv = sps.block_diag([np.linalg.inv(b) for b in b22], format="csr")
    Pm = sps.csr_matrix((np.ones(prim_of_red.size), (prim_of_red, np.arange(prim_of_red.size))),
                        shape=(prim_ptr[-1], prim_ptr[-1]))
    A_prim = Pm @ A @ Pm.T
    J11 = A_prim + J12 @ (J22inv @ J21)
    sec_mag = np.repeat([row_mag[prim_ptr[c]:prim_ptr[c + 1]].mean() for c in range(n)], n_sec)
    r2 = rng.uniform(-1.0, 1.0, sec_ptr[-1]) * scale * sec_mag
    r1 = -(Pm @ P.b) + J12 @ (J22inv @ r2)
    ip = np.concatenate([np.arange(full_ptr[c], full_ptr[c] + n_pri[c]) for c in range(n)])
    iq = np.concatenate([np.arange(full_ptr[c] + n_pri[c], full_ptr[c + 1]) for c in range(n)])
    order = np.concatenate([ip, iq])
    N = int(full_ptr[-1])
    Pf = sps.csr_matrix((np.ones(N), (order, np.arange(N))), shape=(N, N))
    Jfull = (Pf @ sps.bmat([[J11, J12], [J21, J22]]) @ Pf.T).tocsr()
    r = Pf @ np.concatenate([r1, r2])
    return GlobalJacobian(BlockMatrix.from_csr(Jfull, full_layout(parts)), np.asarray(r), list(P.states), parts)
