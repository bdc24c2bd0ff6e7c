"""Scalar obstacle problem: min sum |Dv|^2 over v >= psi, v = g on the boundary.

Solved by red-black projected SOR.  The contact set, its free-boundary faces,
and a contact-density classification of free-boundary points are extracted
from the discrete solution.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .domain import Grid, dirichlet_energy, laplacian_apply, neighbor_sum, _shift_slices

logger = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """Iteration budget exhausted; carries the last residual and iterate."""

    def __init__(self, message: str, residual: float, iterate=None):
        super().__init__(message)
        self.residual = residual
        self.iterate = iterate


class PointClass(str, Enum):
    REGULAR = "regular"
    SINGULAR = "singular"
    INDETERMINATE = "indeterminate"


@dataclass
class PSORConfig:
    omega: float = 1.8
    tol: float = 1e-6
    max_iters: int = 200_000
    check_every: int = 1
    track_energy: bool = False


@dataclass
class DensityConfig:
    regular_lo: float = 0.35
    regular_hi: float = 0.65
    singular_max: float = 0.15
    n_scales: int = 3
    contact_tol: float | None = None


@dataclass(eq=False)
class ScalarObstacleProblem:
    grid: Grid
    psi: np.ndarray
    g: np.ndarray
    superharmonic: bool = field(init=False)

    def __post_init__(self):
        self.psi = np.asarray(self.psi, float)
        self.g = np.asarray(self.g, float)
        if self.psi.shape != self.grid.shape or self.g.shape != self.grid.shape:
            raise ValueError("psi and g must be sampled on the grid")
        b = self.grid.boundary
        if np.any(self.g[b] < self.psi[b]):
            raise ValueError("boundary data lies below the obstacle: admissible set is empty")
        act = self.grid.active
        if not (np.all(np.isfinite(self.psi[act])) and np.all(np.isfinite(self.g[b]))):
            raise ValueError("obstacle and boundary data must be finite")
        lap = laplacian_apply(self.grid, self.psi)
        self.superharmonic = bool(np.all(lap[self.grid.interior] < 0))

    @classmethod
    def from_functions(cls, grid: Grid, psi_fn, g_fn) -> "ScalarObstacleProblem":
        psi = grid.sample(psi_fn)
        g = np.where(grid.boundary, grid.sample(g_fn), 0.0)
        return cls(grid, psi, g)

    def shifted(self, t: float) -> "ScalarObstacleProblem":
        """Same obstacle with boundary data g + t."""
        return ScalarObstacleProblem(self.grid, self.psi, np.where(self.grid.boundary, self.g + t, 0.0))

    @property
    def scale(self) -> float:
        return max(1.0, float(np.max(np.abs(self.psi[self.grid.active]))))

    @property
    def contact_tol(self) -> float:
        return 10 * np.finfo(float).eps * self.scale


def lcp_residual(u: np.ndarray, problem: ScalarObstacleProblem) -> float:
    """max over Interior of |min(-Lap_h u, u - psi)|, divided by max(1, |psi|_inf)."""
    grid = problem.grid
    lap = laplacian_apply(grid, u)
    r = np.minimum(-lap, u - problem.psi)[grid.interior]
    return float(np.max(np.abs(r))) / problem.scale


def initial_guess(problem: ScalarObstacleProblem) -> np.ndarray:
    grid = problem.grid
    u = np.where(grid.boundary, problem.g, 0.0)
    base = float(np.min(problem.g[grid.boundary]))
    u[grid.interior] = np.maximum(problem.psi[grid.interior], base)
    return u


def solve_psor(problem: ScalarObstacleProblem, cfg: PSORConfig | None = None, u0=None) -> np.ndarray:
    """Red-black projected SOR: relaxed Gauss-Seidel value then u <- max(u, psi).

    Returns the first iterate whose LCP residual is <= cfg.tol.
    """
    cfg = cfg or PSORConfig()
    if not 0 < cfg.omega < 2:
        raise ValueError("relaxation must lie in (0, 2)")
    if cfg.max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    grid = problem.grid
    d = grid.dim
    u = initial_guess(problem) if u0 is None else np.array(u0, float)
    u[grid.boundary] = problem.g[grid.boundary]
    u[~grid.active] = 0.0
    psi = problem.psi
    colors = [grid.interior & (grid.parity == c) for c in (0, 1)]
    energies = [] if cfg.track_energy else None
    res = lcp_residual(u, problem)
    solve_psor.energies = energies
    if res <= cfg.tol:
        return u
    for it in range(1, cfg.max_iters + 1):
        for mask in colors:
            gs = neighbor_sum(u, d) / (2 * d)
            relaxed = u + cfg.omega * (gs - u)
            u = np.where(mask, np.maximum(relaxed, psi), u)
        if energies is not None:
            energies.append(dirichlet_energy(grid, u))
        if it % cfg.check_every == 0:
            res = lcp_residual(u, problem)
            if res <= cfg.tol:
                logger.debug("PSOR converged in %d sweeps (residual %.3e)", it, res)
                solve_psor.energies = energies
                return u
    res = lcp_residual(u, problem)
    solve_psor.energies = energies
    raise ConvergenceError(f"PSOR did not reach tol {cfg.tol} in {cfg.max_iters} sweeps", res, u)


# ---------------------------------------------------------------------------
# contact set and free boundary


@dataclass(eq=False)
class ContactReport:
    grid: Grid
    contact: np.ndarray  # bool per node, Interior nodes only
    faces: np.ndarray  # (k, 2) flat node indices (contact side first)
    face_midpoints: np.ndarray  # (k, dim)
    fb_nodes: np.ndarray  # flat indices of contact nodes touching a face
    cfg: DensityConfig = field(default_factory=DensityConfig)
    densities: dict = field(default_factory=dict)
    classes: dict = field(default_factory=dict)

    @property
    def fb_points(self) -> np.ndarray:
        return self.grid.coords.reshape(-1, self.grid.dim)[self.fb_nodes]

    def counts(self) -> dict:
        out = {c.value: 0 for c in PointClass}
        for v in self.classes.values():
            out[v.value] += 1
        return out


def free_boundary_faces(grid: Grid, contact: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dual faces joining a contact node to an active non-contact node."""
    flat = np.arange(grid.n_nodes).reshape(grid.shape)
    faces = []
    for a in range(grid.dim):
        lo, hi = _shift_slices(grid.dim, a)
        both = grid.active[lo] & grid.active[hi]
        c_lo, c_hi = contact[lo], contact[hi]
        m1 = both & c_lo & ~c_hi
        m2 = both & c_hi & ~c_lo
        faces.append(np.stack([flat[lo][m1], flat[hi][m1]], axis=1))
        faces.append(np.stack([flat[hi][m2], flat[lo][m2]], axis=1))
    faces = np.concatenate(faces, axis=0) if faces else np.zeros((0, 2), int)
    order = np.lexsort((faces[:, 1], faces[:, 0]))
    faces = faces[order]
    pts = grid.coords.reshape(-1, grid.dim)
    mid = 0.5 * (pts[faces[:, 0]] + pts[faces[:, 1]])
    return faces, mid


def contact_cells(grid: Grid, contact: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cells anchored at their lower corner: (fully-contact flag, inside-domain flag)."""
    d = grid.dim
    inner = tuple(slice(0, -1) for _ in range(d))
    full = np.ones(tuple(n - 1 for n in grid.shape), bool)
    inside = np.ones_like(full)
    for corner in np.ndindex(*(2,) * d):
        sl = tuple(slice(c, n - 1 + c) for c, n in zip(corner, grid.shape))
        full &= contact[sl]
        inside &= grid.active[sl]
    del inner
    return full & inside, inside


def contact_density(grid: Grid, contact: np.ndarray, x0, radii) -> np.ndarray:
    """Fraction of in-domain cells with centre in B_r(x0) that are fully in contact."""
    full, inside = contact_cells(grid, contact)
    centres = np.stack(
        np.meshgrid(*[ax[:-1] + 0.5 * grid.h for ax in grid.axes], indexing="ij"), axis=-1
    )
    dist = np.sqrt(np.sum((centres - np.asarray(x0, float)) ** 2, axis=-1))
    out = []
    for r in radii:
        ball = (dist <= r) & inside
        n = int(np.sum(ball))
        out.append(float(np.sum(full & ball)) / n if n else np.nan)
    return np.asarray(out)


def dyadic_radii(h: float, n_scales: int) -> list[float]:
    return [4 * h * 2**j for j in range(n_scales)]


def _classify(delta: np.ndarray, cfg: DensityConfig) -> PointClass:
    fine = delta[:2]
    if np.all((fine >= cfg.regular_lo) & (fine <= cfg.regular_hi)):
        return PointClass.REGULAR
    if np.all(fine <= cfg.singular_max):
        return PointClass.SINGULAR
    return PointClass.INDETERMINATE


def report_from_mask(grid: Grid, contact: np.ndarray, cfg: DensityConfig | None = None) -> ContactReport:
    """Build a ContactReport (faces, densities, classes) from a contact mask."""
    cfg = cfg or DensityConfig()
    contact = np.asarray(contact, bool) & grid.interior
    faces, mid = free_boundary_faces(grid, contact)
    fb_nodes = np.unique(faces[:, 0]) if len(faces) else np.zeros(0, int)
    rep = ContactReport(grid, contact, faces, mid, fb_nodes, cfg)
    radii = dyadic_radii(grid.h, cfg.n_scales)
    if len(fb_nodes):
        full, inside = contact_cells(grid, contact)
        centres = np.stack(
            np.meshgrid(*[ax[:-1] + 0.5 * grid.h for ax in grid.axes], indexing="ij"), axis=-1
        )
        cflat = centres.reshape(-1, grid.dim)
        full_f = full.ravel()
        in_f = inside.ravel()
        from scipy.spatial import cKDTree

        tree = cKDTree(cflat[in_f])
        full_in = full_f[in_f]
        pts = grid.coords.reshape(-1, grid.dim)[fb_nodes]
        for node, p in zip(fb_nodes, pts):
            delta = []
            for r in radii:
                idx = tree.query_ball_point(p, r + 1e-12 * grid.h)
                delta.append(float(np.sum(full_in[idx])) / len(idx) if idx else np.nan)
            delta = np.asarray(delta)
            rep.densities[int(node)] = delta
            rep.classes[int(node)] = _classify(delta, cfg)
    return rep


def contact_report(u: np.ndarray, problem: ScalarObstacleProblem, cfg: DensityConfig | None = None) -> ContactReport:
    cfg = cfg or DensityConfig()
    tol = cfg.contact_tol if cfg.contact_tol is not None else problem.contact_tol
    contact = (u - problem.psi <= tol) & problem.grid.interior
    return report_from_mask(problem.grid, contact, cfg)


def classify_free_boundary_point(report: ContactReport, x0) -> PointClass:
    """Regular / Singular / Indeterminate from the contact density at the two finest scales."""
    node = int(np.ravel_multi_index(report.grid.index_of(x0), report.grid.shape))
    if node not in report.classes:
        raise ValueError(f"{tuple(np.asarray(x0))} is not a free-boundary point")
    return report.classes[node]


def schaeffer_perturbation_experiment(problem: ScalarObstacleProblem, t_list, cfg: PSORConfig | None = None,
                                      density: DensityConfig | None = None) -> list[dict]:
    """Solve with boundary data g + t for each t and count Singular free-boundary points."""
    out = []
    for t in t_list:
        p = problem.shifted(float(t))
        u = solve_psor(p, cfg)
        rep = contact_report(u, p, density)
        counts = rep.counts()
        out.append({
            "t": float(t),
            "n_free_boundary": int(len(rep.fb_nodes)),
            "n_singular": counts["singular"],
            "n_regular": counts["regular"],
            "n_indeterminate": counts["indeterminate"],
            "singular_points": [rep.grid.coords.reshape(-1, rep.grid.dim)[n].tolist()
                                for n, c in sorted(rep.classes.items()) if c is PointClass.SINGULAR],
        })
    return out


# ---------------------------------------------------------------------------
# fixtures


def parabola_1d(h: float) -> ScalarObstacleProblem:
    """Omega = (-1, 1), psi = 1/2 - x^2, g = 0."""
    from .domain import BoxDomain, build_grid

    grid = build_grid(BoxDomain((-1.0,), (1.0,)), h)
    return ScalarObstacleProblem.from_functions(grid, lambda x: 0.5 - x[:, 0] ** 2, lambda x: np.zeros(len(x)))


def parabola_1d_exact(x: np.ndarray) -> np.ndarray:
    """Closed form: obstacle on |x| <= a = 1 - sqrt(1/2), tangent lines to (+-1, 0) outside."""
    a = 1.0 - np.sqrt(0.5)
    x = np.asarray(x, float)
    return np.where(np.abs(x) <= a, 0.5 - x**2, 2 * a * (1.0 - np.abs(x)))


def cross_obstacle(h: float, depth: float = 4.0) -> ScalarObstacleProblem:
    """psi = -depth x^2 y^2 on [-1, 1]^2 with g = 0.

    The zero solution touches psi along the two coordinate axes, a thin cross of
    contact whose points are all singular; lifting g by any t > 0 removes contact.
    """
    from .domain import BoxDomain, build_grid

    grid = build_grid(BoxDomain((-1.0, -1.0), (1.0, 1.0)), h)
    return ScalarObstacleProblem.from_functions(
        grid, lambda x: -depth * x[:, 0] ** 2 * x[:, 1] ** 2, lambda x: np.zeros(len(x))
    )
