"""Uniform lattices over simple domains and the discrete operators shared by all solvers.

Fields are plain numpy arrays laid out on ``grid.shape``: a scalar field has
shape ``grid.shape`` and an m-vector field has shape ``grid.shape + (m,)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

EXTERIOR, BOUNDARY, INTERIOR = 0, 1, 2
CLASS_NAMES = {EXTERIOR: "exterior", BOUNDARY: "boundary", INTERIOR: "interior"}


class GridError(ValueError):
    """Raised when a lattice cannot resolve the requested domain."""


# ---------------------------------------------------------------------------
# domain shapes


@dataclass(frozen=True)
class BoxDomain:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.lo)

    def signed_distance(self, x: np.ndarray) -> np.ndarray:
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        q = np.maximum(lo - x, x - hi)
        outside = np.sqrt(np.sum(np.maximum(q, 0.0) ** 2, axis=-1))
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def snap(self, x: np.ndarray) -> np.ndarray:
        """Nearest point of the box surface."""
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        y = np.clip(x, lo, hi)
        inside = np.all((x > lo) & (x < hi), axis=-1)
        if np.any(inside):
            xi = x[inside]
            gaps = np.concatenate([xi - lo, hi - xi], axis=-1)
            k = np.argmin(gaps, axis=-1)
            yi = xi.copy()
            rows = np.arange(len(xi))
            axis = k % self.dim
            yi[rows, axis] = np.where(k < self.dim, lo[axis], hi[axis])
            y[inside] = yi
        return y

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.lo, float), np.asarray(self.hi, float)

    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))


@dataclass(frozen=True)
class BallDomain:
    center: tuple[float, ...]
    radius: float

    @property
    def dim(self) -> int:
        return len(self.center)

    def signed_distance(self, x: np.ndarray) -> np.ndarray:
        return _norm(x - np.asarray(self.center)) - self.radius

    def snap(self, x: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center, float)
        d = x - c
        rho = _norm(d)
        e = np.zeros_like(d)
        e[..., 0] = 1.0
        safe = rho > 0
        e[safe] = d[safe] / rho[safe, None]
        return c + self.radius * e

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center, float)
        return c - self.radius, c + self.radius

    def center_point(self) -> np.ndarray:
        return np.asarray(self.center, float)


@dataclass(frozen=True)
class AnnulusDomain:
    center: tuple[float, ...]
    inner: float
    outer: float

    @property
    def dim(self) -> int:
        return len(self.center)

    def signed_distance(self, x: np.ndarray) -> np.ndarray:
        rho = _norm(x - np.asarray(self.center))
        return np.maximum(rho - self.outer, self.inner - rho)

    def snap(self, x: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center, float)
        d = x - c
        rho = _norm(d)
        e = np.zeros_like(d)
        e[..., 0] = 1.0
        safe = rho > 0
        e[safe] = d[safe] / rho[safe, None]
        target = np.where(rho < 0.5 * (self.inner + self.outer), self.inner, self.outer)
        return c + target[..., None] * e

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center, float)
        return c - self.outer, c + self.outer


def _norm(x: np.ndarray) -> np.ndarray:
    # explicit component sum keeps results invariant under axis permutations
    s = x[..., 0] * x[..., 0]
    for a in range(1, x.shape[-1]):
        s = s + x[..., a] * x[..., a]
    return np.sqrt(s)


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform lattice ``origin + h * index`` with a per-node classification."""

    dim: int
    h: float
    shape: tuple[int, ...]
    origin: tuple[float, ...]
    node_class: np.ndarray = field(repr=False)
    shape_spec: object = None

    @cached_property
    def axes(self) -> list[np.ndarray]:
        return [self.origin[a] + self.h * np.arange(n) for a, n in enumerate(self.shape)]

    @cached_property
    def coords(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        out = np.stack(mesh, axis=-1)
        out.flags.writeable = False  # cached and shared
        return out

    @cached_property
    def interior(self) -> np.ndarray:
        return self.node_class == INTERIOR

    @cached_property
    def boundary(self) -> np.ndarray:
        return self.node_class == BOUNDARY

    @cached_property
    def active(self) -> np.ndarray:
        return self.node_class != EXTERIOR

    @cached_property
    def parity(self) -> np.ndarray:
        idx = np.indices(self.shape).sum(axis=0)
        return idx % 2

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    def boundary_points(self) -> np.ndarray:
        """Boundary node positions snapped onto the domain surface, shape (nb, dim)."""
        x = self.coords[self.boundary]
        if self.shape_spec is None:
            return x
        return self.shape_spec.snap(x)

    def index_of(self, x) -> tuple[int, ...]:
        """Nearest lattice index to point ``x``."""
        x = np.asarray(x, float)
        idx = np.rint((x - np.asarray(self.origin)) / self.h).astype(int)
        idx = np.clip(idx, 0, np.asarray(self.shape) - 1)
        return tuple(int(i) for i in idx)

    def sample(self, fn, m: int | None = None) -> np.ndarray:
        """Evaluate ``fn(points) -> values`` at every node; boundary nodes use snapped points."""
        pts = self.coords.reshape(-1, self.dim)
        # copy: fn may hand back a view of the coordinates themselves
        vals = np.array(fn(pts), float)
        out = vals.reshape(self.shape + vals.shape[1:])
        if np.any(self.boundary):
            out[self.boundary] = np.asarray(fn(self.boundary_points()), float)
        return out


def build_grid(shape_spec, h: float) -> Grid:
    """Lay a lattice of spacing ``h`` over ``shape_spec`` and classify its nodes.

    A node is Interior when its signed distance to the domain surface is at most
    -h/2, Boundary when within h/2 of it, Exterior otherwise.  Ball-like domains
    get a lattice containing their center and one node of padding.
    """
    if not h > 0:
        raise GridError(f"spacing must be positive, got {h}")
    dim = shape_spec.dim
    if isinstance(shape_spec, BoxDomain):
        lo, hi = shape_spec.bounding_box()
        counts = (hi - lo) / h
        n = np.rint(counts).astype(int)
        if np.any(np.abs(counts - n) > 1e-9 * np.maximum(1.0, counts)):
            raise GridError("box extents must be integer multiples of h")
        shape = tuple(int(k) + 1 for k in n)
        origin = tuple(float(v) for v in lo)
    else:
        c = np.asarray(shape_spec.center, float)
        lo, hi = shape_spec.bounding_box()
        half = int(math.ceil(float(np.max(hi - c)) / h)) + 1
        shape = (2 * half + 1,) * dim
        origin = tuple(float(v) for v in c - half * h)

    tmp = Grid(dim, float(h), shape, origin, np.zeros(shape, np.int8), shape_spec)
    sd = shape_spec.signed_distance(tmp.coords)
    tol = 1e-12 * h
    cls = np.full(shape, EXTERIOR, np.int8)
    cls[sd <= 0.5 * h + tol] = BOUNDARY
    cls[sd <= -0.5 * h + tol] = INTERIOR
    # interior nodes must not sit on the lattice edge
    edge = np.zeros(shape, bool)
    for a in range(dim):
        sl = [slice(None)] * dim
        sl[a] = 0
        edge[tuple(sl)] = True
        sl[a] = -1
        edge[tuple(sl)] = True
    cls[edge & (cls == INTERIOR)] = BOUNDARY
    if not np.any(cls == INTERIOR):
        raise GridError(f"resolution h={h} leaves no interior nodes")
    return Grid(dim, float(h), shape, origin, cls, shape_spec)


# ---------------------------------------------------------------------------
# operators


def _vec(f: np.ndarray, grid: Grid) -> tuple[np.ndarray, bool]:
    f = np.asarray(f, float)
    if f.shape == grid.shape:
        return f[..., None], True
    if f.shape[:-1] != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    return f, False


def _shift_slices(dim: int, axis: int):
    lo = [slice(None)] * dim
    hi = [slice(None)] * dim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    return tuple(lo), tuple(hi)


def neighbor_sum(f: np.ndarray, dim: int) -> np.ndarray:
    """Sum of the 2*dim lattice neighbours, grouped as ((S_0 + S_1) + S_2).

    Each axis pair is summed first so that permuting axes by a lattice rotation
    reproduces the same floating-point result.  Values on the outer lattice
    layer are incomplete and must be masked by the caller.
    """
    total = None
    for a in range(dim):
        lo, hi = _shift_slices(dim, a)
        plus = np.zeros_like(f)
        minus = np.zeros_like(f)
        plus[lo] = f[hi]
        minus[hi] = f[lo]
        pair = plus + minus
        total = pair if total is None else total + pair
    return total


def laplacian_apply(grid: Grid, f: np.ndarray) -> np.ndarray:
    """(sum of neighbours - 2 dim centre) / h^2 on Interior nodes, zero elsewhere."""
    fv, scalar = _vec(f, grid)
    lap = (neighbor_sum(fv, grid.dim) - 2 * grid.dim * fv) / grid.h**2
    lap = np.where(grid.interior[..., None], lap, 0.0)
    return lap[..., 0] if scalar else lap


def gradient_apply(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Central differences on Interior nodes.

    Returns shape ``grid.shape + (dim,)`` for scalars and
    ``grid.shape + (m, dim)`` for m-vector fields; zero off the interior.
    """
    fv, scalar = _vec(f, grid)
    out = np.zeros(fv.shape + (grid.dim,))
    for a in range(grid.dim):
        lo, hi = _shift_slices(grid.dim, a)
        fwd = np.zeros_like(fv)
        fwd[lo] = fv[hi]
        bwd = np.zeros_like(fv)
        bwd[hi] = fv[lo]
        out[..., a] = (fwd - bwd) / (2 * grid.h)
    out = np.where(grid.interior[..., None, None], out, 0.0)
    return out[..., 0, :] if scalar else out


def edge_energies(grid: Grid, u: np.ndarray) -> list[np.ndarray]:
    """Per-axis forward-edge energies |u_j - u_i|^2 h^(dim-2).

    Entry ``i`` of the axis-a array belongs to the edge (i, i + e_a).  Edges
    touching an Exterior node carry zero; edges joining two Boundary nodes are
    half weighted because they straddle the domain surface.
    """
    uv, _ = _vec(u, grid)
    d = grid.dim
    scale = grid.h ** (d - 2)
    out = []
    for a in range(d):
        lo, hi = _shift_slices(d, a)
        diff = uv[hi] - uv[lo]
        sq = np.sum(diff * diff, axis=-1)
        w = (grid.active[hi] & grid.active[lo]).astype(float)
        w[grid.boundary[hi] & grid.boundary[lo]] = 0.5
        e = np.zeros(grid.shape)
        e[lo] = w * sq * scale
        out.append(e)
    return out


def node_energy_density(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Edge energies split half-and-half onto their endpoints; sums to the Dirichlet energy."""
    dens = np.zeros(grid.shape)
    for a, e in enumerate(edge_energies(grid, u)):
        lo, hi = _shift_slices(grid.dim, a)
        dens += 0.5 * e
        dens[hi] += 0.5 * e[lo]
    return dens


def order_free_sum(values) -> float:
    """Sum rounded to a common fixed-point grid, so the result ignores summation order.

    Each value is rounded to a multiple of 2^-k chosen so the int64 total cannot
    overflow; the integer sum is exact, hence identical for permuted inputs.
    """
    parts = [np.ravel(np.asarray(v, float)) for v in values]
    n = sum(p.size for p in parts)
    peak = max((float(np.max(np.abs(p))) for p in parts if p.size), default=0.0)
    if peak == 0.0:
        return 0.0
    k = 61 - math.ceil(math.log2(peak * n))
    total = sum(int(np.sum(np.rint(np.ldexp(p, k)).astype(np.int64))) for p in parts)
    return math.ldexp(float(total), -k)


def dirichlet_energy(grid: Grid, u: np.ndarray) -> float:
    """Discrete sum of |Du|^2 h^dim over lattice edges inside the domain."""
    return order_free_sum(edge_energies(grid, u))


def ball_mask(grid: Grid, x0, r: float) -> np.ndarray:
    x0 = np.asarray(x0, float)
    d = _norm(grid.coords - x0)
    return (d <= r + 1e-12 * grid.h) & grid.active


def ball_energy(grid: Grid, u: np.ndarray, x0, r: float) -> float:
    """Energy carried by the active nodes of B_r(x0)."""
    if r < grid.h:
        raise ValueError(f"radius {r} is below the lattice spacing {grid.h}")
    mask = ball_mask(grid, x0, r)
    if not np.any(mask):
        raise ValueError("ball does not meet the domain")
    return float(np.sum(node_energy_density(grid, u)[mask]))
