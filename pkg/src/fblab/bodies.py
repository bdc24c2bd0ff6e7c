"""Convex obstacles: membership, signed distance, projection, curvature.

All methods are vectorised over leading axes: points have shape (..., m).
Signed distance is negative inside the body.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import _norm


class ConvexBody:
    """Common behaviour; subclasses supply ``signed_distance`` and ``nearest_boundary_point``."""

    dim: int

    def signed_distance(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def nearest_boundary_point(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    @property
    def fd_step(self) -> float:
        return 1e-4 * self.diameter

    def ambiguous(self, p: np.ndarray) -> np.ndarray:
        """Points whose projection needed a tie-break."""
        return np.zeros(np.shape(p)[:-1], bool)

    def contains(self, p: np.ndarray) -> np.ndarray:
        """Strict interior membership."""
        return self.signed_distance(p) < 0

    def project_out(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, float)
        inside = self.contains(p)
        if not np.any(inside):
            return p.copy()
        out = p.copy()
        out[inside] = self.nearest_boundary_point(p[inside])
        return out

    def outward_normal(self, y: np.ndarray) -> np.ndarray:
        """Unit gradient of the signed distance (finite differences)."""
        y = np.asarray(y, float)
        s = self.fd_step
        g = np.empty_like(y)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = s
            g[..., i] = (self.signed_distance(y + e) - self.signed_distance(y - e)) / (2 * s)
        return g / _norm(g)[..., None]

    def fd_hessian(self, y: np.ndarray) -> np.ndarray:
        """Finite-difference Hessian of the signed distance, shape (..., m, m)."""
        y = np.asarray(y, float)
        s = self.fd_step
        m = self.dim
        sd = self.signed_distance
        H = np.empty(y.shape + (m,))
        f0 = sd(y)
        eye = np.eye(m) * s
        for i in range(m):
            H[..., i, i] = (sd(y + eye[i]) - 2 * f0 + sd(y - eye[i])) / s**2
            for j in range(i + 1, m):
                v = (
                    sd(y + eye[i] + eye[j])
                    - sd(y + eye[i] - eye[j])
                    - sd(y - eye[i] + eye[j])
                    + sd(y - eye[i] - eye[j])
                ) / (4 * s**2)
                H[..., i, j] = v
                H[..., j, i] = v
        return H

    def distance_hessian(self, y: np.ndarray) -> np.ndarray:
        return self.fd_hessian(y)

    def hessian_quadform(self, y: np.ndarray, G: np.ndarray) -> np.ndarray:
        """Hess(dist)_y[G, G] = sum over columns g of G of g^T H g.

        ``G`` has shape (..., m, n): column a holds the partial derivative along x_a.
        """
        y = np.asarray(y, float)
        if np.any(self.signed_distance(y) < -1e-8):
            raise ValueError("Hessian of the distance is only defined on or outside the body")
        H = self.distance_hessian(y)
        return np.einsum("...ia,...ij,...ja->...", G, H, G)

    def principal_curvatures(self, q: np.ndarray) -> np.ndarray:
        """Tangential eigenvalues of the FD Hessian of signed distance at boundary points q."""
        q = np.atleast_2d(np.asarray(q, float))
        H = self.fd_hessian(q)
        n = self.outward_normal(q)
        out = np.empty((len(q), self.dim - 1))
        for k in range(len(q)):
            # orthonormal basis of the tangent plane
            _, _, vt = np.linalg.svd(n[k][None, :])
            T = vt[1:]
            out[k] = np.linalg.eigvalsh(T @ H[k] @ T.T)
        return out

    def flat_witness(self, y: np.ndarray, tol: float = 1e-2) -> np.ndarray:
        """Is the boundary flat (all principal curvatures < tol) at the point nearest y?"""
        y = np.atleast_2d(np.asarray(y, float))
        q = self.nearest_boundary_point(y)
        kappa = self.principal_curvatures(q)
        return np.all(np.abs(kappa) < tol, axis=-1)


@dataclass(frozen=True)
class Ball(ConvexBody):
    center: tuple[float, ...]
    radius: float

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def signed_distance(self, p):
        return _norm(np.asarray(p, float) - np.asarray(self.center)) - self.radius

    def contains(self, p):
        d = np.asarray(p, float) - np.asarray(self.center)
        # explicit ordered sum: einsum's grouping is not symmetric under axis swaps
        s = d[..., 0] * d[..., 0]
        for a in range(1, d.shape[-1]):
            s = s + d[..., a] * d[..., a]
        return s < self.radius**2

    def ambiguous(self, p):
        return _norm(np.asarray(p, float) - np.asarray(self.center)) == 0

    def nearest_boundary_point(self, p):
        p = np.asarray(p, float)
        c = np.asarray(self.center, float)
        d = p - c
        rho = _norm(d)
        e = np.zeros_like(d)
        e[..., 0] = 1.0  # tie-break at the centre: first coordinate axis
        safe = rho > 0
        e[safe] = d[safe] / rho[safe][..., None]
        return c + self.radius * e

    def outward_normal(self, y):
        d = np.asarray(y, float) - np.asarray(self.center)
        return d / _norm(d)[..., None]

    def distance_hessian(self, y):
        # (I - n n^T) / |y - c|
        d = np.asarray(y, float) - np.asarray(self.center)
        rho = _norm(d)
        n = d / rho[..., None]
        eye = np.eye(self.dim)
        return (eye - n[..., :, None] * n[..., None, :]) / rho[..., None, None]


@dataclass(frozen=True)
class HalfSpace(ConvexBody):
    """Obstacle {y : (y - point) . normal < 0}; the normal points away from it."""

    point: tuple[float, ...]
    normal: tuple[float, ...]

    def __post_init__(self):
        n = np.asarray(self.normal, float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ValueError("half-space normal must be a unit vector")

    @property
    def dim(self) -> int:
        return len(self.point)

    @property
    def diameter(self) -> float:
        return 1.0

    def signed_distance(self, p):
        p = np.asarray(p, float)
        return np.sum((p - np.asarray(self.point)) * np.asarray(self.normal), axis=-1)

    def nearest_boundary_point(self, p):
        p = np.asarray(p, float)
        return p - self.signed_distance(p)[..., None] * np.asarray(self.normal)

    def outward_normal(self, y):
        y = np.asarray(y, float)
        return np.broadcast_to(np.asarray(self.normal, float), y.shape).copy()

    def distance_hessian(self, y):
        y = np.asarray(y, float)
        return np.zeros(y.shape + (self.dim,))

    def flat_witness(self, y, tol=1e-2):
        y = np.atleast_2d(np.asarray(y, float))
        return np.ones(len(y), bool)


@dataclass(frozen=True)
class SlabCappedBall(ConvexBody):
    """Ball cut by the slab |y_last - c_last| <= half_width: two flat discs joined by a zone."""

    center: tuple[float, ...]
    radius: float
    half_width: float

    def __post_init__(self):
        if not 0 < self.half_width < self.radius:
            raise ValueError("slab half-width must lie in (0, radius)")

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    @property
    def disc_radius(self) -> float:
        return float(np.sqrt(self.radius**2 - self.half_width**2))

    def _split(self, p):
        d = np.asarray(p, float) - np.asarray(self.center)
        return d, d[..., :-1], d[..., -1]

    def signed_distance(self, p):
        d, lat, z = self._split(p)
        R, w, a = self.radius, self.half_width, self.disc_radius
        rho = _norm(d)
        inside_val = np.maximum(rho - R, np.abs(z) - w)
        # exterior distance by region
        rlat = _norm(lat) if lat.shape[-1] > 0 else np.zeros_like(z)
        above = np.abs(z) > w
        on_cap = above & (rlat <= a)
        # radial projection lands inside the slab -> sphere distance
        zr = np.where(rho > 0, R * np.abs(z) / np.where(rho > 0, rho, 1.0), 0.0)
        sphere = zr <= w
        edge_d = np.sqrt((rlat - a) ** 2 + (np.abs(z) - w) ** 2)
        ext = np.where(on_cap, np.abs(z) - w, np.where(sphere, rho - R, edge_d))
        outside = inside_val > 0
        return np.where(outside, ext, inside_val)

    def nearest_boundary_point(self, p):
        d, lat, z = self._split(p)
        c = np.asarray(self.center, float)
        R, w, a = self.radius, self.half_width, self.disc_radius
        rho = _norm(d)
        rlat = _norm(lat)
        sz = np.where(z >= 0, 1.0, -1.0)  # ties toward the upper disc
        out = np.empty_like(d)
        sd = self.signed_distance(p)
        inside = sd <= 0
        # interior: nearer of sphere (R - rho) and disc planes (w - |z|); ties to the disc
        to_sphere = R - rho
        to_disc = w - np.abs(z)
        use_disc = to_disc <= to_sphere
        # sphere candidate
        e = np.zeros_like(d)
        e[..., 0] = 1.0
        safe = rho > 0
        e[safe] = d[safe] / rho[safe][..., None]
        sph = R * e
        disc = d.copy()
        disc[..., -1] = sz * w
        # exterior regions
        above = np.abs(z) > w
        on_cap = above & (rlat <= a)
        zr = np.where(rho > 0, R * np.abs(z) / np.where(rho > 0, rho, 1.0), 0.0)
        sphere_ok = zr <= w
        el = np.zeros_like(lat)
        el[..., 0] = 1.0
        lsafe = rlat > 0
        el[lsafe] = lat[lsafe] / rlat[lsafe][..., None]
        edge = np.concatenate([a * el, (sz * w)[..., None]], axis=-1)
        capped = d.copy()
        capped[..., -1] = sz * w
        ext = np.where(on_cap[..., None], capped, np.where(sphere_ok[..., None], sph, edge))
        intr = np.where(use_disc[..., None], disc, sph)
        out = np.where(inside[..., None], intr, ext)
        return c + out

    def _region(self, y):
        """0 = flat disc, 1 = spherical zone, 2 = edge circle (for points on or outside)."""
        d, lat, z = self._split(y)
        R, w, a = self.radius, self.half_width, self.disc_radius
        rho = _norm(d)
        rlat = _norm(lat)
        tol = 1e-9 * R
        sd = self.signed_distance(y)
        zr = np.where(rho > 0, R * np.abs(z) / np.where(rho > 0, rho, 1.0), 0.0)
        ext = np.where((np.abs(z) > w) & (rlat <= a), 0, np.where(zr <= w, 1, 2))
        on = np.where((np.abs(z) >= w - tol) & (rlat < a - tol), 0, 1)
        return np.where(sd > tol, ext, on)

    def outward_normal(self, y):
        d, lat, z = self._split(y)
        region = self._region(y)
        sz = np.where(z >= 0, 1.0, -1.0)
        n = np.zeros_like(d)
        n[..., -1] = sz
        rho = _norm(d)
        sph = d / np.where(rho > 0, rho, 1.0)[..., None]
        q = self.nearest_boundary_point(y) - np.asarray(self.center)
        v = d - q
        dist = _norm(v)
        edge = np.where(dist[..., None] > 0, v / np.where(dist > 0, dist, 1.0)[..., None], sph)
        return np.where((region == 0)[..., None], n, np.where((region == 1)[..., None], sph, edge))

    def distance_hessian(self, y):
        """Closed form by region; points exactly on the edge circle use the zone formula."""
        y = np.asarray(y, float)
        d, lat, z = self._split(y)
        m = self.dim
        region = self._region(y)
        eye = np.eye(m)
        rho = _norm(d)
        n = d / np.where(rho > 0, rho, 1.0)[..., None]
        H_sph = (eye - n[..., :, None] * n[..., None, :]) / np.where(rho > 0, rho, 1.0)[..., None, None]
        H = np.zeros(y.shape + (m,))
        H = np.where((region == 1)[..., None, None], H_sph, H)
        edge = region == 2
        if np.any(edge):
            a = self.disc_radius
            q = self.nearest_boundary_point(y[edge]) - np.asarray(self.center)
            de = d[edge]
            v = de - q
            dist = _norm(v)
            lat_e = de[..., :-1]
            rl = _norm(lat_e)
            el = lat_e / rl[..., None]
            radial = np.concatenate([el, np.zeros(el.shape[:-1] + (1,))], axis=-1)
            up = np.zeros_like(de)
            up[..., -1] = 1.0
            # orthogonal complement of (radial, up) spans the circle's tangent directions
            P_plane = radial[..., :, None] * radial[..., None, :] + up[..., :, None] * up[..., None, :]
            P_tan = eye - P_plane
            nv = v / np.where(dist > 0, dist, 1.0)[..., None]
            He = (P_plane - nv[..., :, None] * nv[..., None, :]) / np.where(dist > 0, dist, np.inf)[..., None, None]
            He = He + ((rl - a) / (rl * np.where(dist > 0, dist, np.inf)))[..., None, None] * P_tan
            # on the edge itself fall back to the zone formula
            He = np.where((dist > 0)[..., None, None], He, H_sph[edge])
            H[edge] = He
        return H


@dataclass(frozen=True)
class Ellipsoid(ConvexBody):
    center: tuple[float, ...]
    semi_axes: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def diameter(self) -> float:
        return 2.0 * max(self.semi_axes)

    def _root(self, d):
        """Largest root t of sum (a_i d_i / (a_i^2 + t))^2 = 1, or NaN when degenerate."""
        a2 = np.asarray(self.semi_axes, float) ** 2
        amin2 = a2.min()
        lo = np.full(d.shape[:-1], -amin2)
        hi = np.maximum(np.sqrt(np.sum(a2 * d * d, axis=-1)), 0.0) + 1e-300

        def phi(t):
            return np.sum((np.sqrt(a2) * d / (a2 + t[..., None])) ** 2, axis=-1) - 1.0

        # degenerate when phi stays negative as t -> -amin^2 (medial axis of the body)
        t_probe = -amin2 * (1 - 1e-14) * np.ones_like(lo)
        degenerate = phi(t_probe) < 0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            pos = phi(mid) > 0
            lo = np.where(pos, mid, lo)
            hi = np.where(pos, hi, mid)
            if np.all(hi - lo <= 1e-16 * np.maximum(1.0, np.abs(hi))):
                break
        t = 0.5 * (lo + hi)
        # Newton polish
        for _ in range(3):
            den = a2 + t[..., None]
            f = np.sum(a2 * d * d / den**2, axis=-1) - 1.0
            fp = -2.0 * np.sum(a2 * d * d / den**3, axis=-1)
            step = np.where(fp != 0, f / np.where(fp != 0, fp, 1.0), 0.0)
            tn = t - step
            ok = np.isfinite(tn) & (tn > -amin2)
            t = np.where(ok, tn, t)
        return t, degenerate

    def _nearest(self, p):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self._nearest_impl(p)

    def _nearest_impl(self, p):
        p = np.asarray(p, float)
        c = np.asarray(self.center, float)
        a = np.asarray(self.semi_axes, float)
        a2 = a * a
        d = p - c
        t, degenerate = self._root(d)
        q = a2 * d / (a2 + t[..., None])
        # near the medial axis a_min^2 + t cancels; rebuild the shortest-axis components
        # from the surface equation, where only well-conditioned terms enter
        short = a2 == a2.min()
        close = (~degenerate) & (a2.min() + t < 1e-3 * a2.min())
        if np.any(close) and not np.all(short):
            dk = d[close][..., short] / a[short]
            rest = 1.0 - np.sum((q[close][..., ~short] / a[~short]) ** 2, axis=-1)
            s = np.sqrt(np.maximum(rest, 0.0) / np.sum(dk * dk, axis=-1))
            qc = q[close]
            qc[..., short] = s[..., None] * d[close][..., short]
            q[close] = qc
        if np.any(degenerate):
            k = int(np.argmin(a2))
            dd = d[degenerate]
            den = a2 - a2[k]
            qd = np.where(den > 0, a2 * dd / np.where(den > 0, den, 1.0), 0.0)
            qd[..., k] = 0.0
            rest = 1.0 - np.sum((qd / a) ** 2, axis=-1)
            qd[..., k] = a[k] * np.sqrt(np.maximum(rest, 0.0))  # tie-break: + side
            q[degenerate] = qd
        return c + q, degenerate

    def contains(self, p):
        d = (np.asarray(p, float) - np.asarray(self.center)) / np.asarray(self.semi_axes, float)
        return np.sum(d * d, axis=-1) < 1.0

    def signed_distance(self, p):
        p = np.asarray(p, float)
        q, _ = self._nearest(p)
        dist = _norm(p - q)
        return np.where(self.contains(p), -dist, dist)

    def nearest_boundary_point(self, p):
        return self._nearest(p)[0]

    def ambiguous(self, p):
        return self._nearest(p)[1]

    def outward_normal(self, y):
        q = self.nearest_boundary_point(y) - np.asarray(self.center)
        g = q / np.asarray(self.semi_axes, float) ** 2
        return g / _norm(g)[..., None]

    def distance_hessian(self, y):
        """S (I + d S)^-1 with S the shape operator at the nearest boundary point."""
        y = np.asarray(y, float)
        m = self.dim
        a2 = np.asarray(self.semi_axes, float) ** 2
        q = self.nearest_boundary_point(y) - np.asarray(self.center)
        grad = q / a2
        gn = _norm(grad)
        n = grad / gn[..., None]
        P = np.eye(m) - n[..., :, None] * n[..., None, :]
        S = P @ (np.diag(1.0 / a2)) @ P / gn[..., None, None]
        dist = np.maximum(self.signed_distance(y), 0.0)
        M = np.eye(m) + dist[..., None, None] * S
        return S @ np.linalg.inv(M)


def body_from_dict(spec: dict) -> ConvexBody:
    """Build a body from a config mapping; raises KeyError naming the missing field."""
    kind = spec["kind"]
    if kind == "ball":
        return Ball(tuple(spec["center"]), float(spec["radius"]))
    if kind == "ellipsoid":
        return Ellipsoid(tuple(spec["center"]), tuple(float(v) for v in spec["semi_axes"]))
    if kind == "slab_capped_ball":
        return SlabCappedBall(tuple(spec["center"]), float(spec["radius"]), float(spec["half_width"]))
    if kind == "half_space":
        return HalfSpace(tuple(spec["point"]), tuple(float(v) for v in spec["normal"]))
    raise ValueError(f"unknown body kind {kind!r}")
