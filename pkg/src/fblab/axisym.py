"""k-axially symmetric maps B^3 -> R^3 minus the unit ball, reduced to the (r, x3) half-plane.

A map (u^r(r, z), k theta, u^3(r, z)) has Dirichlet energy

    2 pi  int int  (|grad u^r|^2 + |grad u^3|^2 + k^2 (u^r)^2 / r^2)  r dr dz

over the half-disc {r >= 0, r^2 + z^2 <= 1}.  The discretisation is a finite
volume one: r-edges carry the weight r_{i+1/2}, z-edges the weight r_i (h/8 on
the axis, whose cell is [0, h/2]), and the node term k^2 h^2 / r_i.  Rows sit at
half-integer multiples of h so the plane z = 0 holds no nodes and the reflection
z -> -z maps the lattice onto itself.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.interpolate import RegularGridInterpolator

from .domain import BOUNDARY, EXTERIOR, INTERIOR, Grid, order_free_sum
from .scalar_obstacle import free_boundary_faces
from .specialfunc import legendre_zeros

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


class AxisymError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict, iterate=None):
        super().__init__(message)
        self.diagnostics = diagnostics
        self.iterate = iterate


class HalfDisc:
    """{r >= 0, r^2 + z^2 <= R^2} in the (r, z) half-plane."""

    dim = 2

    def __init__(self, radius: float = 1.0):
        self.radius = float(radius)

    def signed_distance(self, x):
        x = np.asarray(x, float)
        return np.sqrt(x[..., 0] ** 2 + x[..., 1] ** 2) - self.radius

    def snap(self, x):
        x = np.asarray(x, float)
        rho = np.sqrt(x[..., 0] ** 2 + x[..., 1] ** 2)
        return x * (self.radius / rho)[..., None]


def half_plane_grid(h: float, radius: float = 1.0) -> Grid:
    """Lattice r_i = i h (i >= 0), z_j = (j + 1/2) h - Z, classified against the half-disc."""
    if not h > 0:
        raise ValueError("spacing must be positive")
    nr = int(np.ceil(radius / h)) + 2
    half = int(np.ceil(radius / h)) + 1
    nz = 2 * half
    origin = (0.0, -(half - 0.5) * h)
    spec = HalfDisc(radius)
    tmp = Grid(2, float(h), (nr, nz), origin, np.zeros((nr, nz), np.int8), spec)
    sd = spec.signed_distance(tmp.coords)
    tol = 1e-12 * h
    cls = np.full((nr, nz), EXTERIOR, np.int8)
    cls[sd <= 0.5 * h + tol] = BOUNDARY
    cls[sd <= -0.5 * h + tol] = INTERIOR
    cls[-1, :][cls[-1, :] == INTERIOR] = BOUNDARY
    cls[:, 0][cls[:, 0] == INTERIOR] = BOUNDARY
    cls[:, -1][cls[:, -1] == INTERIOR] = BOUNDARY
    if not np.any(cls == INTERIOR):
        raise ValueError(f"resolution h={h} leaves no interior nodes")
    return Grid(2, float(h), (nr, nz), origin, cls, spec)


@dataclass(eq=False)
class AxisymProblem:
    """Unit-ball obstacle, boundary datum (u^r, u^3) = scale * (r, z) / rho on the arc."""

    h: float
    k: int = 2
    scale: float = 1.0
    grid: Grid = field(init=False)
    g: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("winding k must be >= 1")
        if self.scale < 1.0:
            raise ValueError("boundary data must avoid the unit ball")
        self.grid = half_plane_grid(self.h)
        g = np.zeros(self.grid.shape + (2,))
        pts = self.grid.boundary_points()
        g[self.grid.boundary] = self.scale * pts
        g[..., 0][self.grid.boundary & (self.r == 0)] = 0.0
        self.g = g

    @property
    def r(self) -> np.ndarray:
        return self.grid.coords[..., 0]

    @property
    def z(self) -> np.ndarray:
        return self.grid.coords[..., 1]

    @property
    def axis(self) -> np.ndarray:
        return self.r == 0


@dataclass
class AxisymConfig:
    tau: float = 1.0  # step in units of the Jacobi (diagonal) scaling
    tol: float = 1e-10  # relative energy decrease
    step_tol: float | None = None  # max nodal change; default 1e-5 * h
    max_iters: int = 200_000
    momentum: bool = True
    cascade: int = 2


class _Weights:
    """Edge and node weights of the reduced energy (without the 2 pi factor)."""

    def __init__(self, grid: Grid, k: int):
        h = grid.h
        act = grid.active
        bnd = grid.boundary
        r = grid.coords[..., 0]
        w_r = (r[:-1, :] + 0.5 * h) * (act[:-1, :] & act[1:, :])
        w_r = np.where(bnd[:-1, :] & bnd[1:, :], 0.5 * w_r, w_r)
        col = np.where(r[:, :-1] > 0, r[:, :-1], h / 8)
        w_z = col * (act[:, :-1] & act[:, 1:])
        w_z = np.where(bnd[:, :-1] & bnd[:, 1:], 0.5 * w_z, w_z)
        with np.errstate(divide="ignore"):
            c = np.where(r > 0, k * k * h * h / r, 0.0)
        c = np.where(grid.interior, c, np.where(bnd, 0.5 * c, 0.0))
        self.w_r, self.w_z, self.c = w_r, w_z, c
        # neighbour pairs are summed first so mirrored nodes see identical roundings
        pr = np.pad(w_r, ((1, 1), (0, 0)))
        pz = np.pad(w_z, ((0, 0), (1, 1)))
        self.diag = (pr[:-1] + pr[1:]) + (pz[:, :-1] + pz[:, 1:])


def _energy_terms(W: _Weights, u: np.ndarray) -> list[np.ndarray]:
    dr = u[1:, :] - u[:-1, :]
    dz = u[:, 1:] - u[:, :-1]
    return [
        W.w_r * np.sum(dr * dr, axis=-1),
        W.w_z * np.sum(dz * dz, axis=-1),
        W.c * u[..., 0] ** 2,
    ]


def reduced_energy(grid: Grid, u: np.ndarray, k: int) -> float:
    """Discrete 2 pi int int (|D u^r|^2 + |D u^3|^2 + k^2 (u^r)^2 / r^2) r dr dz."""
    return TWO_PI * order_free_sum(_energy_terms(_Weights(grid, k), u))


def _energy_grad(W: _Weights, u: np.ndarray) -> np.ndarray:
    """Half the gradient of the weighted sum (the 2 pi and the factor 2 cancel in the scaling)."""
    dr = u[1:, :] - u[:-1, :]
    dz = u[:, 1:] - u[:, :-1]
    fr = np.pad(W.w_r[..., None] * dr, ((1, 1), (0, 0), (0, 0)))
    fz = np.pad(W.w_z[..., None] * dz, ((0, 0), (1, 1), (0, 0)))
    g = (fr[:-1] - fr[1:]) + (fz[:, :-1] - fz[:, 1:])
    g[..., 0] += W.c * u[..., 0]
    return g


def _project(u: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Radial scaling onto |u| >= 1; on the axis u^r = 0 so only the sign of u^3 survives."""
    out = u.copy()
    out[..., 0][axis] = 0.0
    rho = np.sqrt(out[..., 0] ** 2 + out[..., 1] ** 2)
    inside = rho < 1.0
    ok = inside & (rho > 0)
    out[ok] = out[ok] / rho[ok][:, None]
    out[inside & (rho == 0)] = (0.0, 1.0)  # tie-break: the north pole
    return out


def initial_axisym(problem: AxisymProblem) -> np.ndarray:
    """Radial blend of the datum toward the origin, projected out of the ball."""
    r, z = problem.r, problem.z
    rho = np.sqrt(r * r + z * z)
    u = np.stack([r, z], axis=-1) / np.maximum(rho, 1e-300)[..., None] * problem.scale
    u = np.where((rho < 1.0)[..., None], u * np.maximum(rho, 1e-300)[..., None], u)
    u = _project(u, problem.axis)
    grid = problem.grid
    u[grid.boundary] = problem.g[grid.boundary]
    u[~grid.active] = 0.0
    return u


def _fill_exterior(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Copy of ``u`` with Exterior nodes set to the nearest active value, so interpolation never reads zeros."""
    _, idx = ndimage.distance_transform_edt(~grid.active, return_indices=True)
    return u[tuple(idx)]


def _prolong(coarse: Grid, uc: np.ndarray, fine: Grid) -> np.ndarray:
    interp = RegularGridInterpolator(coarse.axes, _fill_exterior(coarse, uc), bounds_error=False, fill_value=None)
    # interpolate the upper half only and mirror it (u^3 odd in z), so rounding in
    # the interpolation weights cannot break the reflection symmetry
    nz = fine.shape[1]
    upper = fine.coords[:, nz // 2:]
    vals = interp(upper.reshape(-1, 2)).reshape(upper.shape[:-1] + (2,))
    lower = vals[:, ::-1].copy()
    lower[..., 1] = -lower[..., 1]
    return np.concatenate([lower, vals], axis=1)


def solve_axisym(problem: AxisymProblem, cfg: AxisymConfig | None = None, u0=None) -> np.ndarray:
    """Projected, diagonally scaled gradient descent on the reduced energy.

    Every update is node-parallel, so data symmetric under z -> -z stays
    symmetric to the last bit.  Momentum is restarted and the step halved
    whenever the energy would rise, so accepted iterates never increase it.
    """
    cfg = cfg or AxisymConfig()
    if cfg.max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    grid = problem.grid
    if u0 is None and cfg.cascade > 0 and problem.h * 2 <= 0.25:
        coarse = AxisymProblem(2 * problem.h, problem.k, problem.scale)
        sub = AxisymConfig(**{**cfg.__dict__, "cascade": cfg.cascade - 1, "tol": max(cfg.tol, 1e-9)})
        u0 = _prolong(coarse.grid, solve_axisym(coarse, sub), grid)
    u = initial_axisym(problem) if u0 is None else np.array(u0, float)
    free_r = grid.interior & ~problem.axis
    free_z = grid.interior
    free = np.stack([free_r, free_z], axis=-1)
    u = _project(u, problem.axis)
    u = np.where(free, u, problem.g)
    u[~grid.active] = 0.0
    W = _Weights(grid, problem.k)
    # one scale per node for both components: the radial projection of a scaled
    # gradient step is then still a descent direction on the sphere
    d_node = W.diag + W.c
    dscale = np.where(free, np.stack([d_node, d_node], axis=-1), 1.0)
    step_tol = cfg.step_tol if cfg.step_tol is not None else 1e-5 * grid.h

    def stationarity(v):
        # projected-gradient norm: on contact nodes an inward-pointing descent
        # direction only counts through its tangential part
        q = np.where(free, -_energy_grad(W, v) / dscale, 0.0)
        rho = np.sqrt(v[..., 0] ** 2 + v[..., 1] ** 2)
        n = v / np.maximum(rho, 1e-300)[..., None]
        qn = np.sum(q * n, axis=-1)
        blocked = (rho <= 1.0 + 1e-10) & (qn < 0)
        q = np.where(blocked[..., None], q - qn[..., None] * n, q)
        q[..., 0] = np.where(free_r, q[..., 0], 0.0)
        q[..., 1] = np.where(free_z & ~(problem.axis & blocked), q[..., 1], 0.0)
        return float(np.max(np.abs(q)))

    energy = reduced_energy(grid, u, problem.k)
    history = [energy]
    tau = cfg.tau
    prev = u.copy()
    t_k = 1.0
    for it in range(1, cfg.max_iters + 1):
        if cfg.momentum:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k * t_k))
            y = u + ((t_k - 1.0) / t_next) * (u - prev)
        else:
            t_next, y = 1.0, u
        trial = _project(y - tau * _energy_grad(W, y) / dscale, problem.axis)
        trial = np.where(free, trial, u)
        e_new = reduced_energy(grid, trial, problem.k)
        if e_new > energy:
            if t_k > 1.0:
                t_k = 1.0  # restart momentum first
                prev = u.copy()
                continue
            tau *= 0.5
            if tau < 1e-8:
                res = stationarity(u)
                if res <= step_tol:
                    break  # no representable descent left at a critical point
                raise AxisymError("step underflow away from a critical point",
                                  {"energy": energy, "tau": tau, "iterations": it, "stationarity": res}, u)
            continue
        drop = (energy - e_new) / max(e_new, 1e-300)
        prev, u = u, trial
        t_k = t_next
        tau = min(cfg.tau, 1.5 * tau)
        energy = e_new
        history.append(energy)
        if drop < cfg.tol and stationarity(u) <= step_tol:
            break
    else:
        raise AxisymError(
            f"axisymmetric solve did not settle in {cfg.max_iters} iterations",
            {"energy": energy, "tau": tau, "stationarity": stationarity(u)}, u,
        )
    solve_axisym.energies = history
    return u


# ---------------------------------------------------------------------------
# analysis


def contact_mask(grid: Grid, u: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    rho = np.sqrt(u[..., 0] ** 2 + u[..., 1] ** 2)
    return (rho <= 1.0 + tol) & grid.interior


@dataclass
class AxisNodeReport:
    index: tuple[int, int]
    z: float
    gap: float  # |u| - 1
    partials: dict
    contact: bool
    free_boundary: bool
    branch: bool | None  # None: no claim (non-contact node)


def axis_partials(grid: Grid, u: np.ndarray, j: int) -> dict:
    """Derivatives of (u^r, u^3) at axis node (0, j): one-sided in r, central in z."""
    h = grid.h
    ur, u3 = u[..., 0], u[..., 1]
    return {
        "dr_ur": float((ur[1, j] - ur[0, j]) / h),
        "dz_ur": float((ur[0, j + 1] - ur[0, j - 1]) / (2 * h)),
        "dr_u3": float((-3 * u3[0, j] + 4 * u3[1, j] - u3[2, j]) / (2 * h)),
        "dz_u3": float((u3[0, j + 1] - u3[0, j - 1]) / (2 * h)),
    }


def axis_branch_check(grid: Grid, u: np.ndarray, k: int, branch_tol: float | None = None,
                      contact_tol: float = 1e-10) -> list[AxisNodeReport]:
    """Per Interior axis node: gap |u| - 1, partials, and a branch verdict at contact nodes."""
    tol = 3 * grid.h if branch_tol is None else branch_tol
    contact = contact_mask(grid, u, contact_tol)
    out = []
    for j in np.flatnonzero(grid.interior[0]):
        part = axis_partials(grid, u, j)
        gap = float(np.hypot(u[0, j, 0], u[0, j, 1]) - 1.0)
        c = bool(contact[0, j])
        nbrs = [(1, j), (0, j - 1), (0, j + 1)]
        fb = c and any(grid.active[a, b] and not contact[a, b] for a, b in nbrs)
        verdict = None
        if c:
            verdict = bool(max(abs(v) for v in part.values()) <= tol)
        out.append(AxisNodeReport((0, int(j)), float(grid.coords[0, j, 1]), gap, part, c, fb, verdict))
    return out


@dataclass
class ConeFitReport:
    vertex: tuple[float, float]
    phi: float
    cos_phi: float
    order: int
    nearest_zero: float
    gap: float
    residual: float
    axis_hugging: bool
    n_points: int


def cone_fit(grid: Grid, contact: np.ndarray, vertex, k: int, r_window: tuple[float, float] | None = None
             ) -> ConeFitReport:
    """Fit a line through ``vertex`` to free-boundary face midpoints at distance in ``r_window``.

    Both nappes are folded onto z >= z_v; the direction is the principal axis of
    the folded points (total least squares through the vertex).  phi is the
    angle to the vertical axis.
    """
    h = grid.h
    lo, hi = r_window if r_window is not None else (4 * h, 16 * h)
    v = np.asarray(vertex, float)
    _, mid = free_boundary_faces(grid, contact)
    rel = mid - v
    dist = np.hypot(rel[:, 0], rel[:, 1])
    sel = (dist >= lo - 1e-12) & (dist <= hi + 1e-12)
    if not np.any(sel):
        raise ValueError("no free-boundary faces in the fitting window")
    pts = np.stack([np.abs(rel[sel, 0]), np.abs(rel[sel, 1])], axis=1)
    M = pts.T @ pts
    w, vecs = np.linalg.eigh(M)
    d = np.abs(vecs[:, -1])
    phi = float(np.arctan2(d[0], d[1]))
    normal = np.array([-d[1], d[0]])
    residual = float(np.sqrt(np.mean((pts @ normal) ** 2)))
    hugging = bool(np.all(np.abs(rel[sel, 0]) <= 2 * h + 1e-12))
    order = 2 * k - 1
    zero, gap = legendre_zeros(order).nearest_zero(np.cos(phi))
    return ConeFitReport(tuple(v.tolist()), phi, float(np.cos(phi)), order, zero, gap, residual, hugging,
                         int(np.sum(sel)))


def axis_free_boundary_vertices(grid: Grid, u: np.ndarray, k: int) -> list[tuple[float, float]]:
    return [(0.0, rep.z) for rep in axis_branch_check(grid, u, k) if rep.free_boundary]


# ---------------------------------------------------------------------------
# 3D lift


def lift(grid: Grid, u: np.ndarray, k: int, grid3: Grid) -> np.ndarray:
    """(u^r cos k theta, u^r sin k theta, u^3) on a 3D lattice, bilinear in (r, z)."""
    x = grid3.coords
    r = np.hypot(x[..., 0], x[..., 1])
    th = np.arctan2(x[..., 1], x[..., 0])
    pts = np.stack([r, x[..., 2]], axis=-1).reshape(-1, 2)
    interp = RegularGridInterpolator(grid.axes, _fill_exterior(grid, u), bounds_error=False, fill_value=None)
    vals = interp(pts).reshape(grid3.shape + (2,))
    ur, u3 = vals[..., 0], vals[..., 1]
    out = np.stack([ur * np.cos(k * th), ur * np.sin(k * th), u3], axis=-1)
    out[~grid3.active] = 0.0
    return out


def lift_function(fr, fz, k: int):
    """3D map x -> (f_r cos k theta, f_r sin k theta, f_z) from half-plane functions of (r, z)."""

    def fn(x):
        x = np.asarray(x, float)
        r = np.hypot(x[..., 0], x[..., 1])
        th = np.arctan2(x[..., 1], x[..., 0])
        a = fr(r, x[..., 2])
        return np.stack([a * np.cos(k * th), a * np.sin(k * th), fz(r, x[..., 2])], axis=-1)

    return fn


def sample(grid: Grid, fr, fz) -> np.ndarray:
    """Half-plane field (fr(r, z), fz(r, z)) at every node."""
    r, z = grid.coords[..., 0], grid.coords[..., 1]
    return np.stack([fr(r, z), fz(r, z)], axis=-1) * 1.0
