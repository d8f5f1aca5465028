"""Voxel finite-difference model of a heater-integrated ReRAM crossbar.

Solves the steady electric potential ``div(sigma grad V) = 0`` for one
selected heater, turns it into a Joule source ``sigma |E|^2`` and integrates
the transient heat equation ``rho C dT/dt = div(kappa grad T) + q`` to get
self- and cross-coupling coefficients between a heater and the conductive
filaments (CF) of the surrounding cells.

Conventions
-----------
* Lengths in a ``GeometrySpec`` are in nm; all field arithmetic is SI.
* Arrays are indexed ``[z, y, x]``; z grows upwards, the bottom z face is the
  heat sink.  Cell ``(row, col)`` sits at ``y = (row + 1/2) K``,
  ``x = (col + 1/2) K``.
* Stack, bottom to top: substrate, BE (lines along y, one per column),
  ReRAM oxide (F x F pillar with a CF), SE (F x F pad per cell), heater
  oxide (rod through the centre), TE (lines along x, one per row), cap.
* Rods and filaments are thinner than a voxel; voxels they cross get
  area-fraction-weighted (parallel) properties.
* Only the selected cell's rod conducts; the other heaters' access
  transistors are off, so their rods carry the host oxide's conductivity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse import csgraph

NM = 1e-9
T_SINK = 300.0

# material ids
SWITCHING_OXIDE, ROD, ELECTRODE, CF, ISOLATION_OXIDE = range(5)
HEATER_MIX, CF_MIX = 5, 6
MATERIAL_NAMES = ("switching_oxide", "rod", "electrode", "cf", "isolation_oxide",
                  "heater_mix", "cf_mix")


class ResolutionError(ValueError):
    """A feature does not fit the voxel size."""


class SetupError(ValueError):
    pass


class DegenerateError(ValueError):
    pass


@dataclass(frozen=True)
class MaterialProps:
    kappa_th: float  # W/(m K)
    sigma: float     # S/m
    rho: float       # kg/m^3
    C: float         # J/(kg K)

    def __post_init__(self):
        if min(self.kappa_th, self.sigma, self.rho, self.C) <= 0:
            raise ValueError("material properties must be positive")

    @property
    def rho_c(self):
        return self.rho * self.C


DEFAULT_MATERIALS = {
    SWITCHING_OXIDE: MaterialProps(1.4, 1e-6, 6850.0, 306.0),
    ROD: MaterialProps(23.0, 1e5, 5200.0, 450.0),
    ELECTRODE: MaterialProps(71.8, 1e7, 12033.0, 244.0),
    CF: MaterialProps(23.0, 1e5, 6850.0, 306.0),
    ISOLATION_OXIDE: MaterialProps(0.5, 1e-6, 745.0, 2200.0),
}

# electrode/layer thicknesses in units of F: (BE, SE, TE)
VARIANT_LAYERS = {
    "baseline": (0.5, 0.5, 0.5),
    "modified": (1.0, 0.125, 1.0),
}


@dataclass
class GeometrySpec:
    F: float = 60.0
    K: float = 120.0
    t_ox: float = 30.0
    r_heater: float = 4.19
    r_cf: float = 3.1
    variant: str = "baseline"
    rows: int = 3
    cols: int = 3
    voxel: float | None = None   # nm; default F / 8
    t_sub: float | None = None   # substrate thickness, nm; default 2F
    t_cap: float = 0.0           # isolation oxide above TE, nm
    electrodes_F: tuple | None = None  # (BE, SE, TE) thickness in F; overrides the variant
    materials: dict = field(default_factory=lambda: dict(DEFAULT_MATERIALS))

    def __post_init__(self):
        if self.variant not in VARIANT_LAYERS:
            raise ValueError(f"variant must be one of {sorted(VARIANT_LAYERS)}")
        if self.K < self.F:
            raise ValueError("pitch K must be >= F")
        if not (self.r_heater < self.F / 2 and self.r_cf < self.F / 2):
            raise ValueError("radii must be smaller than F/2")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("array must have at least one cell")

    @property
    def h(self) -> float:
        return self.F / 8 if self.voxel is None else self.voxel

    def layers(self):
        """(name, thickness nm) from the bottom up."""
        be, se, te = self.electrodes_F or VARIANT_LAYERS[self.variant]
        sub = 2 * self.F if self.t_sub is None else self.t_sub
        out = [("substrate", sub), ("be", be * self.F), ("reram_ox", self.t_ox),
               ("se", se * self.F), ("heater_ox", self.t_ox), ("te", te * self.F)]
        if self.t_cap:
            out.append(("cap", self.t_cap))
        return out


@dataclass
class Site:
    heater: np.ndarray     # flat voxel indices of the rod
    heater_w: np.ndarray   # rod area fraction per voxel
    cf: np.ndarray
    cf_w: np.ndarray
    rod_sigma: np.ndarray  # conductivity of the heater voxels when selected
    te_face: np.ndarray    # flat indices of the TE line's x = 0 end face
    se_patch: np.ndarray   # flat indices of the SE pad's x-min side face


@dataclass
class VoxelGrid:
    dims: tuple            # (nz, ny, nx)
    h: float               # voxel size, nm
    material: np.ndarray   # int8 ids, shape dims
    kappa: np.ndarray
    sigma: np.ndarray      # conductivity with every heater deselected
    rho_c: np.ndarray
    sites: dict = field(default_factory=dict)
    layer_z: dict = field(default_factory=dict)  # name -> (z0, z1)
    spec: GeometrySpec | None = None
    T: np.ndarray | None = None
    V: np.ndarray | None = None

    def __post_init__(self):
        if self.T is None:
            self.T = np.full(self.dims, T_SINK)
        if self.V is None:
            self.V = np.zeros(self.dims)
        if self.material.min() < 0 or self.material.max() >= len(MATERIAL_NAMES):
            raise ValueError("invalid material id")

    @property
    def n(self):
        return int(np.prod(self.dims))

    @property
    def h_m(self):
        return self.h * NM

    def layer_voxels(self, name):
        z0, z1 = self.layer_z[name]
        return z1 - z0


def uniform_grid(dims, h, props: MaterialProps, material=SWITCHING_OXIDE) -> VoxelGrid:
    """Single-material block (used for analytic checks)."""
    dims = tuple(int(d) for d in dims)
    ones = np.ones(dims)
    return VoxelGrid(dims=dims, h=float(h), material=np.full(dims, material, dtype=np.int8),
                     kappa=props.kappa_th * ones, sigma=props.sigma * ones,
                     rho_c=props.rho_c * ones)


# -- geometry ------------------------------------------------------------------

def _count(length, h, what):
    n = length / h
    if n < 1 - 1e-9 or abs(n - round(n)) > 1e-6:
        raise ResolutionError(f"{what} = {length} nm is not a whole number of {h} nm voxels")
    return int(round(n))


def _disk_fraction(cx, cy, r, h, nx, ny, sub=16):
    """Area fraction of a disk (centre/radius in nm) inside each voxel column."""
    frac = np.zeros((ny, nx))
    i0, i1 = max(int((cx - r) // h), 0), min(int((cx + r) // h) + 1, nx)
    j0, j1 = max(int((cy - r) // h), 0), min(int((cy + r) // h) + 1, ny)
    offs = (np.arange(sub) + 0.5) / sub * h
    for j in range(j0, j1):
        for i in range(i0, i1):
            xs = i * h + offs
            ys = j * h + offs
            inside = (xs[None, :] - cx) ** 2 + (ys[:, None] - cy) ** 2 <= r * r
            frac[j, i] = inside.mean()
    return frac


def _mix(frac, a: MaterialProps, b: MaterialProps):
    """Parallel mixture of ``a`` (fraction ``frac``) in host ``b``."""
    k = frac * a.kappa_th + (1 - frac) * b.kappa_th
    s = frac * a.sigma + (1 - frac) * b.sigma
    rc = frac * a.rho_c + (1 - frac) * b.rho_c
    return k, s, rc


def build_geometry(spec: GeometrySpec) -> VoxelGrid:
    h = spec.h
    mats = spec.materials
    nF = _count(spec.F, h, "F")
    nK = _count(spec.K, h, "K")
    if (nK - nF) % 2:
        raise ResolutionError("K - F must span an even number of voxels to centre the cells")
    if spec.t_ox / h < 2 - 1e-9:
        raise ResolutionError("voxel size must resolve the oxide with at least 2 voxels")
    layers = spec.layers()
    counts = [_count(t, h, f"{name} thickness") for name, t in layers]
    nx, ny, nz = spec.cols * nK, spec.rows * nK, sum(counts)
    layer_z = {}
    z = 0
    for (name, _), c in zip(layers, counts):
        layer_z[name] = (z, z + c)
        z += c

    mat = np.full((nz, ny, nx), ISOLATION_OXIDE, dtype=np.int8)
    off = (nK - nF) // 2
    # 1-D footprints of the F-wide features
    on_x = np.zeros(nx, bool)
    on_y = np.zeros(ny, bool)
    for c in range(spec.cols):
        on_x[c * nK + off: c * nK + off + nF] = True
    for r in range(spec.rows):
        on_y[r * nK + off: r * nK + off + nF] = True
    pillar = on_y[:, None] & on_x[None, :]

    def zs(name):
        return slice(*layer_z[name])

    mat[zs("be")][:, :, on_x] = ELECTRODE            # BE lines along y
    mat[zs("reram_ox")][:, pillar] = SWITCHING_OXIDE
    mat[zs("se")][:, pillar] = ELECTRODE             # SE pads
    mat[zs("te")][:, on_y, :] = ELECTRODE            # TE lines along x

    kappa = np.empty(mat.shape)
    sigma = np.empty(mat.shape)
    rho_c = np.empty(mat.shape)
    for mid, p in mats.items():
        sel = mat == mid
        kappa[sel], sigma[sel], rho_c[sel] = p.kappa_th, p.sigma, p.rho_c

    sites = {}
    shape = mat.shape
    zr0, zr1 = layer_z["reram_ox"]
    zh0, zh1 = layer_z["heater_ox"]
    zt0, zt1 = layer_z["te"]
    zs0, zs1 = layer_z["se"]
    host = mats[ISOLATION_OXIDE]
    sw = mats[SWITCHING_OXIDE]
    for r in range(spec.rows):
        for c in range(spec.cols):
            cx, cy = (c + 0.5) * spec.K, (r + 0.5) * spec.K
            fh = _disk_fraction(cx, cy, spec.r_heater, h, nx, ny)
            fc = _disk_fraction(cx, cy, spec.r_cf, h, nx, ny)
            jh, ih = np.nonzero(fh)
            jc, ic = np.nonzero(fc)
            heater, heater_w, rod_sigma = [], [], []
            for zz in range(zh0, zh1):
                k_, s_on, rc_ = _mix(fh[jh, ih], mats[ROD], host)
                mat[zz, jh, ih] = HEATER_MIX
                kappa[zz, jh, ih] = k_
                rho_c[zz, jh, ih] = rc_
                sigma[zz, jh, ih] = host.sigma
                heater.append(np.ravel_multi_index((np.full(jh.shape, zz), jh, ih), shape))
                heater_w.append(fh[jh, ih])
                rod_sigma.append(s_on)
            cf, cf_w = [], []
            for zz in range(zr0, zr1):
                k_, s_, rc_ = _mix(fc[jc, ic], mats[CF], sw)
                mat[zz, jc, ic] = CF_MIX
                kappa[zz, jc, ic] = k_
                sigma[zz, jc, ic] = s_
                rho_c[zz, jc, ic] = rc_
                cf.append(np.ravel_multi_index((np.full(jc.shape, zz), jc, ic), shape))
                cf_w.append(fc[jc, ic])
            # TE line of this row: end face at x = 0
            ys = np.flatnonzero(on_y[r * nK: (r + 1) * nK]) + r * nK
            zz, yy = np.meshgrid(np.arange(zt0, zt1), ys, indexing="ij")
            te_face = np.ravel_multi_index((zz.ravel(), yy.ravel(), np.zeros(zz.size, int)), shape)
            # SE pad: its x-min side face
            x0 = c * nK + off
            zz, yy = np.meshgrid(np.arange(zs0, zs1), ys, indexing="ij")
            se_patch = np.ravel_multi_index((zz.ravel(), yy.ravel(), np.full(zz.size, x0)), shape)
            sites[(r, c)] = Site(heater=np.concatenate(heater), heater_w=np.concatenate(heater_w),
                                 cf=np.concatenate(cf), cf_w=np.concatenate(cf_w),
                                 rod_sigma=np.concatenate(rod_sigma),
                                 te_face=te_face, se_patch=se_patch)
    return VoxelGrid(dims=shape, h=h, material=mat, kappa=kappa, sigma=sigma, rho_c=rho_c,
                     sites=sites, layer_z=layer_z, spec=spec)


def selected_sigma(grid: VoxelGrid, site) -> np.ndarray:
    """Conductivity field with the heater of ``site`` switched on."""
    s = grid.sigma.copy().ravel()
    st = grid.sites[site]
    s[st.heater] = st.rod_sigma
    return s.reshape(grid.dims)


def site_drive(grid: VoxelGrid, site, volts: float):
    """Dirichlet patches for one heater: TE end face at ``volts``, SE pad grounded."""
    st = grid.sites[site]
    return [(st.te_face, float(volts)), (st.se_patch, 0.0)]


# -- discrete operators ------------------------------------------------------------

def _faces(shape):
    """Neighbour index pairs along each axis of a C-ordered grid."""
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    pairs = []
    for ax in range(3):
        a = np.take(idx, np.arange(shape[ax] - 1), axis=ax).ravel()
        b = np.take(idx, np.arange(1, shape[ax]), axis=ax).ravel()
        pairs.append((a, b))
    return np.concatenate([p[0] for p in pairs]), np.concatenate([p[1] for p in pairs])


def face_conductance(coef, h_m, a, b):
    """Harmonic-mean face conductance ``c * A / h`` between voxels a and b."""
    c = coef.ravel()
    ca, cb = c[a], c[b]
    return 2.0 * ca * cb / (ca + cb) * h_m


def laplacian(G, a, b, n):
    """Sparse ``sum_faces G (e_a - e_b)(e_a - e_b)^T``."""
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    vals = np.concatenate([G, G, -G, -G])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def sink_conductance(grid: VoxelGrid) -> np.ndarray:
    """Per-voxel conductance (W/K) to the bottom heat sink; zero off the bottom layer."""
    g = np.zeros(grid.dims)
    g[0] = 2.0 * grid.kappa[0] * grid.h_m
    return g.ravel()


# -- potential -------------------------------------------------------------------

@dataclass
class PotentialSolution:
    V: np.ndarray          # shape dims
    joule: np.ndarray      # W/m^3, shape dims
    power: float           # total dissipated power, W
    current_in: float      # A into the high-voltage patch
    current_out: float     # A out of the grounded patch
    residual: float


def solve_potential(grid: VoxelGrid, drive, sigma=None, tol=1e-8, sigma_cut=1.0) -> PotentialSolution:
    """Solve ``div(sigma grad V) = 0`` with Dirichlet patches ``drive``.

    ``drive`` is a list of ``(flat voxel indices, volts)``; everything else has
    zero normal current.  At least one patch must be at 0 V.

    Voxels with ``sigma < sigma_cut`` (S/m) are treated as perfect insulators
    when the grid also contains conductors above the cut, and conducting
    regions not touching a patch float at zero current.  The system is then
    solved on the connected conductor set only.
    """
    sigma = np.ravel(grid.sigma if sigma is None else sigma)
    n = grid.n
    if not drive or not any(v == 0 for _, v in drive):
        raise SetupError("drive needs a grounded patch")
    fixed = np.zeros(n, bool)
    vals = np.zeros(n)
    for idx, v in drive:
        fixed[idx] = True
        vals[idx] = v
    a, b = _faces(grid.dims)
    G = face_conductance(sigma, grid.h_m, a, b)
    active = np.ones(n, bool)
    if sigma.max() >= sigma_cut and sigma.min() < sigma_cut:
        cond = sigma >= sigma_cut
        link = cond[a] & cond[b]
        graph = sp.csr_matrix((np.ones(link.sum()), (a[link], b[link])), shape=(n, n))
        _, label = csgraph.connected_components(graph, directed=False)
        driven = np.unique(label[fixed & cond])
        active = np.isin(label, driven) & cond
        G = np.where(active[a] & active[b], G, 0.0)
    A = laplacian(G, a, b, n)
    V = vals.copy()
    free = active & ~fixed
    residual = 0.0
    if np.any(vals) and free.any():
        A_free = A[free]
        Aff = A_free[:, free].tocsc()
        rhs = -A_free[:, fixed] @ vals[fixed]
        V[free] = spla.spsolve(Aff, rhs)
        r = Aff @ V[free] - rhs
        residual = float(np.linalg.norm(r) / max(np.linalg.norm(rhs), 1e-300))
    if residual > tol:
        raise SetupError(f"potential solve residual {residual:.2e} above {tol:.0e}")
    dV = V[a] - V[b]
    Pf = G * dV ** 2
    P = np.zeros(n)
    np.add.at(P, a, 0.5 * Pf)
    np.add.at(P, b, 0.5 * Pf)
    flux = A @ V  # net current leaving each voxel into the grid
    hi = [idx for idx, v in drive if v != 0]
    lo = [idx for idx, v in drive if v == 0]
    i_in = float(sum(flux[idx].sum() for idx in hi))
    i_out = float(-sum(flux[idx].sum() for idx in lo))
    return PotentialSolution(V=V.reshape(grid.dims), joule=(P / grid.h_m ** 3).reshape(grid.dims),
                             power=float(Pf.sum()), current_in=i_in, current_out=i_out,
                             residual=residual)


# -- heat ------------------------------------------------------------------------

class HeatStepper:
    """Transient heat solver for a fixed grid and time step.

    ``scheme="implicit"`` (backward Euler) or ``"explicit"`` (forward Euler,
    checked against its stability bound).  ``sink=False`` makes every face
    adiabatic.  The implicit system is factorized once for small grids and
    otherwise solved by Jacobi-preconditioned CG warm-started from the
    previous step.
    """

    DIRECT_LIMIT = 30000

    def __init__(self, grid: VoxelGrid, dt: float, scheme="implicit", sink=True,
                 solver=None, rtol=1e-11):
        if scheme not in ("implicit", "explicit"):
            raise ValueError("scheme must be 'implicit' or 'explicit'")
        self.grid, self.dt, self.scheme = grid, float(dt), scheme
        n = grid.n
        a, b = _faces(grid.dims)
        G = face_conductance(grid.kappa, grid.h_m, a, b)
        self.A = laplacian(G, a, b, n)
        self.g_sink = sink_conductance(grid) if sink else np.zeros(n)
        self.A = (self.A + sp.diags(self.g_sink)).tocsc()
        self.cap = grid.rho_c.ravel() * grid.h_m ** 3   # J/K per voxel
        if scheme == "explicit":
            bound = explicit_dt_limit(grid)
            if self.dt > bound:
                raise ValueError(f"dt = {self.dt:.3e} s exceeds the explicit bound {bound:.3e} s")
        else:
            self.solver = solver or ("direct" if n <= self.DIRECT_LIMIT else "cg")
            self.rtol = rtol
            M = (sp.diags(self.cap / self.dt) + self.A).tocsc()
            if self.solver == "direct":
                self._lu = spla.splu(M, permc_spec="MMD_AT_PLUS_A")
            else:
                self._M = M.tocsr()
                self._pre = sp.diags(1.0 / M.diagonal())

    def step(self, u, q=None):
        """Advance the rise above the sink ``u`` (flat, K) under source ``q`` (W/m^3)."""
        src = 0.0 if q is None else np.ravel(q) * self.grid.h_m ** 3
        if self.scheme == "explicit":
            return u + self.dt / self.cap * (src - self.A @ u)
        rhs = self.cap / self.dt * u + src
        if self.solver == "direct":
            return self._lu.solve(rhs)
        x, info = spla.cg(self._M, rhs, x0=u, rtol=self.rtol, atol=0.0, M=self._pre, maxiter=5000)
        if info != 0:
            raise RuntimeError("heat solve did not converge")
        return x

    def energy(self, u):
        return float(self.cap @ u)

    def sink_flux(self, u):
        return float(self.g_sink @ u)


def explicit_dt_limit(grid: VoxelGrid) -> float:
    """``min(rho C h^2 / (6 kappa))`` over the grid."""
    return float(np.min(grid.rho_c * grid.h_m ** 2 / (6.0 * grid.kappa)))


def step_heat(grid: VoxelGrid, joule, dt, scheme="implicit", sink=True) -> VoxelGrid:
    """One transient step of ``grid.T``; builds a fresh stepper (see HeatStepper
    for repeated steps)."""
    st = HeatStepper(grid, dt, scheme, sink)
    u = st.step((grid.T - T_SINK).ravel(), joule)
    grid.T = T_SINK + u.reshape(grid.dims)
    return grid


def steady_state(grid: VoxelGrid, joule) -> np.ndarray:
    """Steady temperature rise for a constant source with the bottom sink."""
    a, b = _faces(grid.dims)
    G = face_conductance(grid.kappa, grid.h_m, a, b)
    A = laplacian(G, a, b, grid.n) + sp.diags(sink_conductance(grid))
    rhs = np.ravel(joule) * grid.h_m ** 3
    if grid.n <= HeatStepper.DIRECT_LIMIT:
        u = spla.spsolve(A.tocsc(), rhs, permc_spec="MMD_AT_PLUS_A")
    else:
        A = A.tocsr()
        u, info = spla.cg(A, rhs, rtol=1e-12, atol=0.0, M=sp.diags(1.0 / A.diagonal()),
                          maxiter=50_000)
        if info != 0:
            raise RuntimeError("steady heat solve did not converge")
    return u.reshape(grid.dims)


# -- coupling --------------------------------------------------------------------

@dataclass
class Pulse:
    volts: float = 0.5
    width: float = 60e-9     # s
    relax: float = 60e-9     # simulated time after the pulse, s
    dt: float = 2e-9


@dataclass
class CouplingResult:
    heated: tuple
    coefficients: dict      # (row, col) -> coefficient
    heater_peak: float      # K above the sink
    probe_peak: dict
    power: float            # W
    times: np.ndarray = None
    heater_trace: np.ndarray = None
    probe_traces: dict = None

    def rows(self, pitch_nm):
        """CSV rows ``site, drow, dcol, distance_nm, coefficient`` sorted by site."""
        r0, c0 = self.heated
        out = []
        for (r, c) in sorted(self.coefficients):
            dr, dc = r - r0, c - c0
            out.append((f"{r},{c}", dr, dc, math.hypot(dr, dc) * pitch_nm, self.coefficients[(r, c)]))
        return out


def _weighted(u, idx, w):
    return float(np.dot(u[idx], w) / w.sum())


def coupling_coefficients(grid: VoxelGrid, heated_site=None, probe_sites=None,
                          pulse: Pulse | None = None, scheme="implicit",
                          keep_traces=False) -> CouplingResult:
    """Peak CF temperature rise at each probe divided by the peak heater rise.

    A probe given as ``("heater", site)`` measures the heater itself; for the
    heated site this is 1 by definition.
    """
    pulse = pulse or Pulse()
    spec = grid.spec
    if heated_site is None:
        heated_site = (spec.rows // 2, spec.cols // 2)
    heated_site = tuple(heated_site)
    if heated_site not in grid.sites:
        raise ValueError(f"no heater at {heated_site}")
    if probe_sites is None:
        probe_sites = sorted(grid.sites)
    sol = solve_potential(grid, site_drive(grid, heated_site, pulse.volts),
                          sigma=selected_sigma(grid, heated_site))
    grid.V = sol.V
    stepper = HeatStepper(grid, pulse.dt, scheme)
    hs = grid.sites[heated_site]
    n_on = int(round(pulse.width / pulse.dt))
    n_tot = n_on + int(round(pulse.relax / pulse.dt))
    u = np.zeros(grid.n)
    probes = []
    for p in probe_sites:
        if isinstance(p, tuple) and len(p) == 2 and p[0] == "heater":
            s = grid.sites[tuple(p[1])]
            probes.append((p, s.heater, s.heater_w))
        else:
            s = grid.sites[tuple(p)]
            probes.append((tuple(p), s.cf, s.cf_w))
    h_tr = np.zeros(n_tot)
    p_tr = {key: np.zeros(n_tot) for key, _, _ in probes}
    for k in range(n_tot):
        u = stepper.step(u, sol.joule if k < n_on else None)
        h_tr[k] = _weighted(u, hs.heater, hs.heater_w)
        for key, idx, w in probes:
            p_tr[key][k] = _weighted(u, idx, w)
    grid.T = T_SINK + u.reshape(grid.dims)
    h_peak = float(h_tr.max())
    if h_peak <= 0:
        raise DegenerateError("heater shows no temperature rise")
    peaks = {key: float(tr.max()) for key, tr in p_tr.items()}
    coeffs = {}
    for key, val in peaks.items():
        if isinstance(key[0], str) and tuple(key[1]) == heated_site:
            coeffs[key] = 1.0
        else:
            coeffs[key] = val / h_peak
    res = CouplingResult(heated=heated_site, coefficients=coeffs, heater_peak=h_peak,
                         probe_peak=peaks, power=sol.power)
    if keep_traces:
        res.times = (np.arange(n_tot) + 1) * pulse.dt
        res.heater_trace, res.probe_traces = h_tr, p_tr
    return res


def convergence_table(spec: GeometrySpec, voxels, pulse: Pulse | None = None):
    """Coupling coefficients of the centre heater at each voxel size."""
    out = []
    for h in voxels:
        s = GeometrySpec(**{**spec.__dict__, "voxel": h})
        res = coupling_coefficients(build_geometry(s), pulse=pulse)
        out.append((h, res.coefficients))
    return out


# -- output ----------------------------------------------------------------------

def write_coupling_csv(result: CouplingResult, path, pitch_nm):
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site", "drow", "dcol", "distance_nm", "coefficient"])
        for site, dr, dc, dist, c in result.rows(pitch_nm):
            w.writerow([site, dr, dc, f"{dist:.6g}", f"{c:.6g}"])


def dump_fields(grid: VoxelGrid, stem):
    """Write ``stem.bin`` (raw little-endian float64 arrays, C order [z, y, x],
    fields back to back) and ``stem.json`` describing the layout."""
    fields = [("T", grid.T), ("V", grid.V), ("material", grid.material.astype("<f8"))]
    header = {"dims_zyx": list(grid.dims), "voxel_nm": grid.h, "dtype": "<f8", "order": "C",
              "fields": [], "materials": list(MATERIAL_NAMES)}
    offset = 0
    with open(f"{stem}.bin", "wb") as fh:
        for name, arr in fields:
            data = np.ascontiguousarray(arr, dtype="<f8")
            fh.write(data.tobytes())
            header["fields"].append({"name": name, "offset_bytes": offset, "count": int(data.size)})
            offset += data.nbytes
    with open(f"{stem}.json", "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
    return header


def load_fields(stem):
    with open(f"{stem}.json") as fh:
        header = json.load(fh)
    raw = np.fromfile(f"{stem}.bin", dtype=header["dtype"])
    dims = tuple(header["dims_zyx"])
    out = {}
    for f in header["fields"]:
        start = f["offset_bytes"] // 8
        out[f["name"]] = raw[start: start + f["count"]].reshape(dims)
    return header, out
