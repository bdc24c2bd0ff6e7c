"""Dirichlet-energy minimisation among maps avoiding a convex body, plus diagnostics.

The constraint is pointwise: u(x) must not enter the open body O.  Solvers keep
every iterate feasible by projecting onto the closure of the complement.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, optimize, signal
from scipy.integrate import solve_ivp
from scipy.interpolate import RegularGridInterpolator

from . import _kernels
from .bodies import Ball, ConvexBody
from .domain import (
    BallDomain,
    Grid,
    _norm,
    ball_energy,
    build_grid,
    dirichlet_energy,
    gradient_apply,
    laplacian_apply,
    node_energy_density,
    order_free_sum,
)
from .scalar_obstacle import free_boundary_faces

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Iteration budget exhausted; ``diagnostics`` holds the last state summary."""

    def __init__(self, message: str, diagnostics: dict, iterate=None):
        super().__init__(message)
        self.diagnostics = diagnostics
        self.iterate = iterate


@dataclass
class ConstraintMapConfig:
    method: str = "sor"  # "sor" (red-black projected SOR) or "gradient" (projected Jacobi step)
    omega: float = 1.9
    tau: float | None = None  # gradient step; default h^2 / 8
    tol: float = 1e-8  # relative energy decrease per sweep
    step_tol: float | None = None  # max nodal change per sweep; default 1e-3 * h
    max_iters: int = 20_000
    init: str = "radial"  # "radial" or "given"
    cascade: int = 2  # number of coarser levels solved first (each 2x coarser)
    contact_tol: float = 1e-10


@dataclass(eq=False)
class ConstraintMapProblem:
    grid: Grid
    body: ConvexBody
    g: np.ndarray  # shape grid.shape + (m,), read on Boundary nodes

    def __post_init__(self):
        self.g = np.asarray(self.g, float)
        if self.g.shape != self.grid.shape + (self.m,):
            raise ValueError(f"boundary data must have shape {self.grid.shape + (self.m,)}")
        gb = self.g[self.grid.boundary]
        if not np.all(np.isfinite(gb)):
            raise ValueError("boundary data must be finite")
        if np.any(self.body.signed_distance(gb) < -1e-8):
            raise ValueError("boundary data enters the obstacle: infeasible datum")

    @property
    def m(self) -> int:
        return self.body.dim

    @classmethod
    def from_function(cls, grid: Grid, body: ConvexBody, g_fn) -> "ConstraintMapProblem":
        g = grid.sample(g_fn)
        g = np.where(grid.boundary[..., None], g, 0.0)
        problem = cls(grid, body, g)
        problem.g_fn = g_fn  # exact boundary values for the radial start and coarse levels
        return problem

    def on_grid(self, grid: Grid, g_fn) -> "ConstraintMapProblem":
        return ConstraintMapProblem.from_function(grid, self.body, g_fn)


def _body_center(body: ConvexBody) -> np.ndarray:
    c = getattr(body, "center", None)
    if c is None:
        return np.asarray(body.project_out(np.zeros((1, body.dim)))[0])
    return np.asarray(c, float)


def radial_initialization(problem: ConstraintMapProblem) -> np.ndarray:
    """Blend boundary data linearly toward the body centre, then project out.

    For a ball-shaped domain the blend weight is |x - c_Omega| / R and the
    boundary value is read at the radial boundary point; other domains use
    the nearest boundary node and a distance-based weight.
    """
    grid = problem.grid
    spec = grid.shape_spec
    x = grid.coords
    center = _body_center(problem.body)
    if isinstance(spec, BallDomain):
        c = np.asarray(spec.center, float)
        d = x - c
        rho = _norm(d)
        dirn = np.zeros_like(d)
        dirn[..., 0] = 1.0
        ok = rho > 0
        dirn[ok] = d[ok] / rho[ok][..., None]
        xb = c + spec.radius * dirn
        gb = _boundary_value(problem, xb)
        t = np.minimum(rho / spec.radius, 1.0)
    else:
        # nearest boundary node and a weight falling off with distance from it
        b = grid.boundary
        dist, idx = ndimage.distance_transform_edt(~b, return_indices=True)
        gb = problem.g[tuple(idx)]
        t = 1.0 - dist / max(float(dist[grid.active].max()), 1.0)
    u = center + t[..., None] * (gb - center)
    at_center = np.all(u == center, axis=-1) & grid.interior
    u = problem.body.project_out(u)
    u[grid.boundary] = problem.g[grid.boundary]
    u[~grid.active] = 0.0
    if np.any(at_center):
        # the body centre has no preferred outward direction: reseed from the neighbour mean
        st = _Stencil(grid)
        uf = u.reshape(-1, problem.m)
        idx = np.flatnonzero(at_center.ravel())
        _, _, mean = _kernels.relaxed_targets(uf, idx, np.asarray(st.offsets, np.int64), 1.0)
        _kernels.scatter(uf, idx, problem.body.project_out(mean))
    return u


def _boundary_value(problem: ConstraintMapProblem, pts: np.ndarray) -> np.ndarray:
    """Boundary datum at arbitrary boundary points, via a stored callable or the nearest node."""
    fn = getattr(problem, "g_fn", None)
    if fn is not None:
        # nearest-node lookup below breaks ties by index order, so prefer the callable
        flat = pts.reshape(-1, pts.shape[-1])
        return np.asarray(fn(flat), float).reshape(pts.shape[:-1] + (problem.m,))
    grid = problem.grid
    from scipy.spatial import cKDTree

    bidx = np.flatnonzero(grid.boundary.ravel())
    tree = cKDTree(grid.boundary_points())
    _, k = tree.query(pts.reshape(-1, grid.dim))
    vals = problem.g.reshape(-1, problem.m)[bidx[k]]
    return vals.reshape(pts.shape[:-1] + (problem.m,))


def _prolong(coarse: Grid, uc: np.ndarray, fine: Grid) -> np.ndarray:
    """Multilinear interpolation of a coarse solution onto a finer lattice."""
    # fill exterior coarse nodes from the nearest active node so interpolation never reads zeros
    _, idx = ndimage.distance_transform_edt(~coarse.active, return_indices=True)
    filled = uc[tuple(idx)]
    interp = RegularGridInterpolator(coarse.axes, filled, bounds_error=False, fill_value=None)
    return interp(fine.coords.reshape(-1, fine.dim)).reshape(fine.shape + (uc.shape[-1],))


class _Stencil:
    """Flat-index gather of the 2*dim neighbours for the two colours of Interior nodes."""

    def __init__(self, grid: Grid):
        self.grid = grid
        strides = np.cumprod((1,) + grid.shape[::-1][:-1])[::-1]
        self.offsets = [int(s) for s in strides]
        flat_int = grid.interior.ravel()
        par = grid.parity.ravel()
        self.colors = [np.flatnonzero(flat_int & (par == c)) for c in (0, 1)]
        self.all = np.flatnonzero(flat_int)

    def sum(self, uf: np.ndarray, idx: np.ndarray) -> np.ndarray:
        total = None
        for s in self.offsets:
            pair = uf[idx - s] + uf[idx + s]
            total = pair if total is None else total + pair
        return total

    def mean(self, uf: np.ndarray, idx: np.ndarray) -> np.ndarray:
        return self.sum(uf, idx) / (2 * len(self.offsets))


def _relative_drop(e_old: float, e_new: float) -> float:
    return (e_old - e_new) / max(e_new, 1e-300)


def _sor(problem: ConstraintMapProblem, u: np.ndarray, cfg: ConstraintMapConfig, history: list) -> np.ndarray:
    grid, body = problem.grid, problem.body
    st = _Stencil(grid)
    m = problem.m
    n2 = 2 * grid.dim
    scale = grid.h ** (grid.dim - 2)
    uf = u.reshape(-1, m).copy()
    omega = cfg.omega
    step_tol = cfg.step_tol if cfg.step_tol is not None else 1e-3 * grid.h
    energy = dirichlet_energy(grid, uf.reshape(u.shape))
    history.append(energy)
    offsets = np.asarray(st.offsets, np.int64)
    for it in range(1, cfg.max_iters + 1):
        undo = []
        change = 0.0
        deltas = []
        for idx in st.colors:
            if not len(idx):
                continue
            S, cur, target = _kernels.relaxed_targets(uf, idx, offsets, float(omega))
            new = body.project_out(target)
            change = max(change, float(np.max(np.abs(new - cur))))
            # a node of one colour only meets the other colour, so its edge energy
            # changes by (new - cur) . (2 dim (new + cur) - 2 S) exactly
            deltas.append(_kernels.local_energy_change(cur, new, S, float(n2)) * scale)
            _kernels.scatter(uf, idx, new)
            undo.append((idx, cur))
        d_energy = order_free_sum(deltas)
        if d_energy > 0 and omega > 1.0:
            # reject the sweep and damp the over-relaxation
            for idx, cur in reversed(undo):
                _kernels.scatter(uf, idx, cur)
            omega = 1.0 + 0.5 * (omega - 1.0)
            if omega < 1.0 + 1e-3:
                omega = 1.0
            logger.debug("sweep %d raised the energy; omega -> %.4f", it, omega)
            continue
        e_new = energy + d_energy
        drop = _relative_drop(energy, e_new)
        energy = e_new
        history.append(energy)
        if drop < cfg.tol and change < step_tol:
            logger.debug("SOR stopped after %d sweeps (drop %.2e, change %.2e)", it, drop, change)
            return uf.reshape(u.shape)
    raise SolverError(
        f"projected SOR did not settle in {cfg.max_iters} sweeps",
        {"energy": energy, "last_change": change, "omega": omega, "sweeps": cfg.max_iters},
        uf.reshape(u.shape),
    )


def _gradient(problem: ConstraintMapProblem, u: np.ndarray, cfg: ConstraintMapConfig, history: list) -> np.ndarray:
    grid, body = problem.grid, problem.body
    tau_max = grid.h**2 / (4 * grid.dim)
    tau = cfg.tau if cfg.tau is not None else grid.h**2 / 8
    if tau > tau_max * (1 + 1e-12):
        raise ValueError(f"step {tau} exceeds the stability bound h^2/(4 dim) = {tau_max}")
    st = _Stencil(grid)
    m = problem.m
    uf = u.reshape(-1, m).copy()
    idx = st.all
    step_tol = cfg.step_tol if cfg.step_tol is not None else 1e-3 * grid.h
    energy = dirichlet_energy(grid, uf.reshape(u.shape))
    history.append(energy)
    n2 = 2 * grid.dim
    for it in range(1, cfg.max_iters + 1):
        cur = uf[idx]
        lap = (st.mean(uf, idx) - cur) * (n2 / grid.h**2)
        while True:
            new = body.project_out(cur + tau * lap)
            trial = uf.copy()
            trial[idx] = new
            e_new = dirichlet_energy(grid, trial.reshape(u.shape))
            if e_new <= energy or tau < 1e-12 * grid.h**2:
                break
            tau *= 0.5
        change = float(np.max(np.abs(new - cur)))
        drop = _relative_drop(energy, e_new)
        uf = trial
        energy = e_new
        history.append(energy)
        if drop < cfg.tol and change < step_tol:
            return uf.reshape(u.shape)
    raise SolverError(
        f"projected gradient did not settle in {cfg.max_iters} iterations",
        {"energy": energy, "last_change": change, "tau": tau, "sweeps": cfg.max_iters},
        uf.reshape(u.shape),
    )


def solve_projected_gradient(problem: ConstraintMapProblem, cfg: ConstraintMapConfig | None = None,
                             u0: np.ndarray | None = None, g_fn=None) -> np.ndarray:
    """Feasible discrete critical point reached by monotone descent from the declared start.

    With ``cascade > 0`` and a callable datum ``g_fn`` the same problem is solved
    on coarser lattices first and interpolated up as the starting iterate.
    """
    cfg = cfg or ConstraintMapConfig()
    if cfg.max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if cfg.method not in ("sor", "gradient"):
        raise ValueError(f"unknown method {cfg.method!r}")
    if not 0 < cfg.omega < 2:
        raise ValueError("relaxation must lie in (0, 2)")
    grid = problem.grid
    if g_fn is not None:
        problem.g_fn = g_fn
    g_fn = getattr(problem, "g_fn", None)
    if u0 is not None:
        u = np.array(u0, float)
    elif cfg.init == "radial":
        u = None
        if cfg.cascade > 0 and g_fn is not None and grid.shape_spec is not None:
            u = _cascade_start(problem, cfg, g_fn)
        if u is None:
            u = radial_initialization(problem)
    else:
        raise ValueError("init='given' needs u0")
    u = problem.body.project_out(u)
    u[grid.boundary] = problem.g[grid.boundary]
    u[~grid.active] = 0.0
    history: list[float] = []
    solver = _sor if cfg.method == "sor" else _gradient
    out = solver(problem, u, cfg, history)
    solve_projected_gradient.energies = history
    return out


def _cascade_start(problem: ConstraintMapProblem, cfg: ConstraintMapConfig, g_fn) -> np.ndarray | None:
    grid = problem.grid
    try:
        coarse_grid = build_grid(grid.shape_spec, 2 * grid.h)
    except ValueError:
        return None
    if min(coarse_grid.shape) < 5:
        return None
    sub = ConstraintMapProblem.from_function(coarse_grid, problem.body, g_fn)
    sub_cfg = ConstraintMapConfig(**{**cfg.__dict__, "cascade": cfg.cascade - 1, "tol": max(cfg.tol, 1e-7)})
    uc = solve_projected_gradient(sub, sub_cfg, g_fn=g_fn)
    return _prolong(coarse_grid, uc, grid)


# ---------------------------------------------------------------------------
# diagnostics


def contact_mask(grid: Grid, u: np.ndarray, body: ConvexBody, tol: float = 1e-10) -> np.ndarray:
    sd = np.full(grid.shape, np.inf)
    sd[grid.active] = body.signed_distance(u[grid.active])
    return (sd <= tol) & grid.interior


def degeneracy_field(grid: Grid, u: np.ndarray, body: ConvexBody, mask: np.ndarray | None = None) -> np.ndarray:
    """F(u) = Hess(dist to O) at u(x) applied to (Du, Du); zero outside ``mask`` (default Interior)."""
    mask = grid.interior if mask is None else mask & grid.interior
    out = np.zeros(grid.shape)
    if not np.any(mask):
        return out
    Du = gradient_apply(grid, u)
    y = u[mask]
    # values on the surface may sit a rounding error inside it
    y = body.project_out(y)
    out[mask] = body.hessian_quadform(y, Du[mask])
    return out


def el_residual(grid: Grid, u: np.ndarray, body: ConvexBody, contact_tol: float = 1e-10,
                exclude=(), exclude_radius: float = 0.0) -> np.ndarray:
    """|Lap_h u + F(u) nu(u) chi_contact| per Interior node.

    On contact nodes the Lagrange multiplier is the normal force -F(u) nu; for the
    unit ball this is -|Du|^2 u.  Nodes within ``exclude_radius`` of any point in
    ``exclude`` are reported as NaN.
    """
    lap = laplacian_apply(grid, u)
    contact = contact_mask(grid, u, body, contact_tol)
    if np.any(contact):
        F = degeneracy_field(grid, u, body, contact)
        nu = body.outward_normal(body.project_out(u[contact]))
        lap[contact] = lap[contact] + F[contact][:, None] * nu
    res = _norm(lap)
    res[~grid.interior] = 0.0
    for p in exclude:
        near = _norm(grid.coords - np.asarray(p, float)) <= exclude_radius
        res[near & grid.interior] = np.nan
    return res


@dataclass
class MonotonicityReport:
    x0: tuple
    radii: np.ndarray
    values: np.ndarray
    slack: float = 0.05
    truncated: tuple = ()

    @property
    def violations(self) -> list[int]:
        """Indices i with E[i+1] < (1 - slack) E[i]."""
        v = self.values
        return [i for i in range(len(v) - 1) if v[i + 1] < (1 - self.slack) * v[i]]

    @property
    def monotone(self) -> bool:
        return not self.violations


def dyadic_radii(h: float, r_max: float, r_min_factor: float = 4.0) -> np.ndarray:
    r = [r_min_factor * h]
    while 2 * r[-1] <= r_max * (1 + 1e-12):
        r.append(2 * r[-1])
    return np.asarray(r)


def rescaled_energy(grid: Grid, u: np.ndarray, x0, radii, slack: float = 0.05) -> MonotonicityReport:
    """E(u, x0, r) = r^(2 - dim) * ball_energy(u, x0, r) for each radius.

    Radii whose ball leaves the domain are dropped with a warning.
    """
    radii = np.asarray(radii, float)
    if np.any(radii < 2 * grid.h):
        raise ValueError("radii must be at least 2h")
    if np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be strictly increasing")
    x0 = np.asarray(x0, float)
    keep = radii
    spec = grid.shape_spec
    if spec is not None:
        depth = -float(spec.signed_distance(x0[None])[0])
        keep = radii[radii <= depth + 1e-12]
        if len(keep) < len(radii):
            warnings.warn(f"radii {radii[len(keep):].tolist()} leave the domain around {x0.tolist()}; dropped",
                          stacklevel=2)
    vals = np.array([r ** (2 - grid.dim) * ball_energy(grid, u, x0, r) for r in keep])
    return MonotonicityReport(tuple(x0.tolist()), keep, vals, slack, tuple(radii[len(keep):].tolist()))


def _ball_offsets(grid: Grid, r: float) -> np.ndarray:
    n = int(np.floor(r / grid.h + 1e-9))
    rng = np.arange(-n, n + 1)
    mesh = np.stack(np.meshgrid(*([rng] * grid.dim), indexing="ij"), axis=-1)
    return _norm(mesh * grid.h) <= r + 1e-12 * grid.h


def rescaled_energy_field(grid: Grid, u: np.ndarray, r: float) -> np.ndarray:
    """E(u, x, r) at every node by convolving the node energy density with a ball kernel."""
    dens = node_energy_density(grid, u)
    dens = np.where(grid.active, dens, 0.0)
    kernel = _ball_offsets(grid, r).astype(float)
    conv = signal.fftconvolve(dens, kernel, mode="same")
    conv = np.maximum(conv, 0.0)  # FFT round-off can dip just below zero
    return r ** (2 - grid.dim) * conv


@dataclass(eq=False)
class SingularityReport:
    grid: Grid
    eps: float
    radius: float
    flagged: np.ndarray  # flat indices of Interior nodes with E(u, x, radius) > eps
    candidates: list[int]  # one representative node per connected flagged cluster
    profiles: dict = field(default_factory=dict)  # candidate -> MonotonicityReport
    branch: list[int] = field(default_factory=list)
    flat_hits: dict = field(default_factory=dict)

    def points(self, nodes=None) -> np.ndarray:
        nodes = self.candidates if nodes is None else nodes
        return self.grid.coords.reshape(-1, self.grid.dim)[np.asarray(nodes, int)].reshape(-1, self.grid.dim)


def detect_discontinuities(grid: Grid, u: np.ndarray, eps: float = 1.0, radius: float | None = None,
                           profile_max: float = 0.25) -> SingularityReport:
    """Flag nodes whose rescaled energy at the finest scale exceeds ``eps``.

    Flagged nodes are grouped into lattice-connected clusters; each cluster is
    represented by the flagged node nearest to its energy-weighted centroid.
    """
    r = 4 * grid.h if radius is None else radius
    E = rescaled_energy_field(grid, u, r)
    flag = (E > eps) & grid.interior
    flagged = np.flatnonzero(flag.ravel())
    labels, n = ndimage.label(flag, structure=np.ones((3,) * grid.dim))
    pts = grid.coords.reshape(-1, grid.dim)
    lab = labels.ravel()
    Ef = E.ravel()
    candidates = []
    for c in range(1, n + 1):
        members = np.flatnonzero(lab == c)
        w = Ef[members]
        centroid = np.sum(pts[members] * w[:, None], axis=0) / np.sum(w)
        k = members[np.argmin(_norm(pts[members] - centroid))]
        candidates.append(int(k))
    candidates.sort()
    rep = SingularityReport(grid, eps, r, flagged, candidates)
    for k in candidates:
        radii = dyadic_radii(grid.h, profile_max)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep.profiles[k] = rescaled_energy(grid, u, pts[k], radii)
    return rep


def detect_branch_points(grid: Grid, u: np.ndarray, body: ConvexBody | None = None,
                         branch_tol: float | None = None, contact_tol: float = 1e-10) -> list[int]:
    """Contact nodes (all Interior nodes when ``body`` is None) where every partial is <= branch_tol."""
    tol = grid.h if branch_tol is None else branch_tol
    Du = gradient_apply(grid, u)
    peak = np.max(np.abs(Du.reshape(grid.shape + (-1,))), axis=-1)
    cand = grid.interior if body is None else contact_mask(grid, u, body, contact_tol)
    return [int(k) for k in np.flatnonzero((cand & (peak <= tol)).ravel())]


def _image_spread(vals: np.ndarray) -> float:
    """Largest pairwise distance in a small point cloud."""
    if len(vals) < 2:
        return 0.0
    diff = vals[:, None, :] - vals[None, :, :]
    return float(np.max(_norm(diff)))


@dataclass
class DistanceDiagnostics:
    d: np.ndarray
    defect: np.ndarray
    table: list[dict]


def distance_diagnostics(grid: Grid, u: np.ndarray, body: ConvexBody, centers=(), radius: float | None = None
                         ) -> DistanceDiagnostics:
    """d = dist(u, O)^+, its subharmonicity defect min(Lap_h d, 0), and oscillation of d vs u near centres.

    Per centre the table lists osc(d), the spread of u, and the spread of the
    directions u/|u - c_O| over active nodes within ``radius`` (default 2h).
    """
    r = 2 * grid.h if radius is None else radius
    d = np.zeros(grid.shape)
    d[grid.active] = np.maximum(body.signed_distance(u[grid.active]), 0.0)
    defect = np.minimum(laplacian_apply(grid, d), 0.0)
    c_body = _body_center(body)
    table = []
    for p in centers:
        near = (_norm(grid.coords - np.asarray(p, float)) <= r + 1e-12 * grid.h) & grid.active
        vals = u[near]
        rel = vals - c_body
        dirs = rel / np.maximum(_norm(rel), 1e-300)[:, None]
        table.append({
            "center": [float(v) for v in p],
            "radius": r,
            "osc_d": float(np.ptp(d[near])) if np.any(near) else 0.0,
            "spread_u": _image_spread(vals),
            "direction_jump": _image_spread(dirs),
        })
    return DistanceDiagnostics(d, defect, table)


# ---------------------------------------------------------------------------
# fixtures and oracles


def fixture_uk(k: int, grid: Grid) -> np.ndarray:
    """u_k(z) = (Re z^2, Im z^2, Re z^k) on a 2D lattice, z = x + i y."""
    if grid.dim != 2:
        raise ValueError("u_k lives on a planar grid")
    if k < 1:
        raise ValueError("k must be >= 1")
    z = grid.coords[..., 0] + 1j * grid.coords[..., 1]
    z2 = z * z
    zk = z**k
    return np.stack([z2.real, z2.imag, zk.real], axis=-1)


@dataclass(frozen=True)
class RadialProfile:
    """Radial ball-in-ball minimiser u = f(|x|) x/|x| for O = B_1, Omega = B_R, g = id."""

    R: float
    rho_star: float
    A: float
    B: float

    def f(self, rho):
        rho = np.asarray(rho, float)
        with np.errstate(divide="ignore"):
            out = self.A * rho + self.B / rho**2
        return np.where(rho <= self.rho_star, 1.0, out)

    def u(self, x):
        x = np.asarray(x, float)
        rho = _norm(x)
        e = np.zeros_like(x)
        e[..., 0] = 1.0
        ok = rho > 0
        e[ok] = x[ok] / rho[ok][..., None]
        return self.f(rho)[..., None] * e


def radial_profile(R: float = 2.0) -> RadialProfile:
    """C^1 matching of f = A rho + B / rho^2 to f = 1: rho^3 - 3 R^3 rho + 2 R^3 = 0, root in (0, R)."""
    if R <= 1:
        raise ValueError("the domain must be larger than the obstacle")
    roots = np.roots([1.0, 0.0, -3 * R**3, 2 * R**3])
    real = sorted(r.real for r in roots if abs(r.imag) < 1e-12 and 0 < r.real < R)
    rho = real[0]
    A = 2.0 / (3.0 * rho)
    return RadialProfile(R, rho, A, A * rho**3 / 2)


def radial_shooting(R: float = 2.0) -> float:
    """Independent check of the contact radius: shoot f'' = 2 f / rho^2 - 2 f' / rho from (1, 0)."""

    def miss(rs):
        sol = solve_ivp(lambda r, y: [y[1], 2 * y[0] / r**2 - 2 * y[1] / r], (rs, R), [1.0, 0.0],
                        rtol=1e-12, atol=1e-14)
        return sol.y[0, -1] - R

    return float(optimize.brentq(miss, 1e-3, R - 1e-6, xtol=1e-14))


# ---------------------------------------------------------------------------
# experiments


def identity(x):
    return np.asarray(x, float)


def free_boundary(grid: Grid, contact: np.ndarray) -> np.ndarray:
    """Midpoints of dual faces between contact and non-contact active nodes."""
    return free_boundary_faces(grid, contact)[1]


@dataclass
class FlatPieceConfig:
    body: ConvexBody = field(default_factory=lambda: Ball((0.0, 0.0, 0.0), 1.0))
    domain_radius: float = 2.0
    h: float = 1 / 32
    eps: float = 1.0
    flat_tol: float = 1e-2
    solver: ConstraintMapConfig = field(default_factory=ConstraintMapConfig)


def singularity_geometry(grid: Grid, u: np.ndarray, body: ConvexBody, eps: float = 1.0, flat_tol: float = 1e-2,
                         contact_tol: float = 1e-10) -> dict:
    """Distances from discontinuity candidates to the free boundary and flatness of their images."""
    rep = detect_discontinuities(grid, u, eps)
    contact = contact_mask(grid, u, body, contact_tol)
    fb = free_boundary(grid, contact)
    pts = grid.coords.reshape(-1, grid.dim)
    uf = u.reshape(-1, u.shape[-1])
    rows = []
    for k in rep.candidates:
        p = pts[k]
        dist = float(np.min(_norm(fb - p))) if len(fb) else np.inf
        # image near the candidate: projected values at contact nodes within 2h
        near = np.flatnonzero(((_norm(grid.coords - p) <= 2 * grid.h + 1e-12) & contact).ravel())
        if len(near):
            imgs = body.project_out(uf[near])
            flat = body.flat_witness(imgs, flat_tol)
            flat_frac = float(np.mean(flat))
        else:
            flat_frac = 0.0
        rep.flat_hits[k] = flat_frac > 0.5
        rows.append({"node": k, "point": p.tolist(), "dist_to_fb": dist, "dist_to_fb_h": dist / grid.h,
                     "flat_fraction": flat_frac, "image_flat": flat_frac > 0.5})
    return {"report": rep, "candidates": rows, "n_fb_faces": int(len(fb)), "contact": contact}


def flat_piece_experiment(cfg: FlatPieceConfig) -> dict:
    """Solve the g = id problem on B_R around ``cfg.body`` and locate Sigma_u relative to the free boundary.

    (a): some candidate lies within 2h of the free boundary; (b): that candidate's
    image lies on a flat piece of the body.
    """
    grid = build_grid(BallDomain((0.0,) * cfg.body.dim, cfg.domain_radius), cfg.h)
    problem = ConstraintMapProblem.from_function(grid, cfg.body, identity)
    u = solve_projected_gradient(problem, cfg.solver, g_fn=identity)
    geo = singularity_geometry(grid, u, cfg.body, cfg.eps, cfg.flat_tol, cfg.solver.contact_tol)
    rows = geo["candidates"]
    near = [r for r in rows if r["dist_to_fb"] <= 2 * grid.h + 1e-12]
    a = bool(near)
    b = any(r["image_flat"] for r in near)
    min_h = min((r["dist_to_fb_h"] for r in rows), default=np.inf)
    return {
        "h": cfg.h,
        "a_candidate_on_free_boundary": a,
        "b_image_on_flat_piece": b,
        "min_distance_h": float(min_h),
        "candidates": rows,
        "energy": dirichlet_energy(grid, u),
        "grid": grid,
        "u": u,
    }
