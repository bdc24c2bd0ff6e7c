"""Shortest paths in the plane around a disk: closed form and a discrete polyline solver."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bodies import Ball, ConvexBody


@dataclass(frozen=True)
class GeodesicProblem:
    a: tuple[float, float]
    b: tuple[float, float]
    body: ConvexBody

    def __post_init__(self):
        pts = np.array([self.a, self.b], float)
        if np.any(self.body.signed_distance(pts) <= 0):
            raise ValueError("endpoints must lie strictly outside the obstacle")


@dataclass
class GeodesicPath:
    vertices: np.ndarray
    length: float
    touching: bool
    basin: str = "short"

    def reversed(self) -> "GeodesicPath":
        return GeodesicPath(self.vertices[::-1].copy(), self.length, self.touching, self.basin)


@dataclass
class GeodesicConfig:
    init: str = "short"  # "short", "long" or "straight"
    omega: float = 1.9
    max_iters: int = 50_000
    tol: float = 1e-10


def polyline_length(v: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(np.diff(v, axis=0), axis=1)))


def segment_distance(p, a, b) -> np.ndarray:
    """Distance from point p to segments [a_i, b_i]."""
    p = np.asarray(p, float)
    a = np.atleast_2d(np.asarray(a, float))
    b = np.atleast_2d(np.asarray(b, float))
    ab = b - a
    denom = np.sum(ab * ab, axis=-1)
    t = np.where(denom > 0, np.sum((p - a) * ab, axis=-1) / np.where(denom > 0, denom, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    q = a + t[:, None] * ab
    return np.linalg.norm(p - q, axis=-1)


def obstructed(a, b, ball: Ball) -> bool:
    """Does the open segment ab meet the open disk?"""
    return bool(segment_distance(ball.center, a, b)[0] < ball.radius)


def _side(a, b, c) -> float:
    """+1 when b lies counter-clockwise of a about c; exact ties broken by the unordered pair."""
    cross = (a[0] - c[0]) * (b[1] - c[1]) - (a[1] - c[1]) * (b[0] - c[0])
    if cross != 0:
        return float(np.sign(cross))
    # collinear through the centre: orient from the lexicographically smaller endpoint
    return 1.0 if tuple(a) <= tuple(b) else -1.0


def wrap_angles(a, b, ball: Ball) -> tuple[float, float]:
    """(short, long) wrap angles of the tangent-arc-tangent paths."""
    c = np.asarray(ball.center, float)
    da, db = np.asarray(a, float) - c, np.asarray(b, float) - c
    ra, rb = np.linalg.norm(da), np.linalg.norm(db)
    gamma = float(np.arccos(np.clip(np.dot(da, db) / (ra * rb), -1.0, 1.0)))
    ta = float(np.arccos(ball.radius / ra))
    tb = float(np.arccos(ball.radius / rb))
    return gamma - ta - tb, 2 * np.pi - gamma - ta - tb


def disk_path_length(a, b, ball: Ball, side: str = "short") -> float:
    """Closed-form length: straight when unobstructed, tangent + arc + tangent otherwise."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if side == "short" and not obstructed(a, b, ball):
        return float(np.linalg.norm(b - a))
    c = np.asarray(ball.center, float)
    R = ball.radius
    tangents = np.sqrt(np.sum((a - c) ** 2) - R**2) + np.sqrt(np.sum((b - c) ** 2) - R**2)
    short, long = wrap_angles(a, b, ball)
    return float(tangents + R * (short if side == "short" else long))


def shortest_path_disk(a, b, ball: Ball, dtheta: float = np.pi / 180, side: str = "short") -> GeodesicPath:
    """Tangent-arc-tangent path (or the straight segment) with the arc sampled every ``dtheta``."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if ball.signed_distance(np.array([a, b])).min() <= 0:
        raise ValueError("endpoints must lie strictly outside the disk")
    if side == "short" and not obstructed(a, b, ball):
        return GeodesicPath(np.array([a, b]), float(np.linalg.norm(b - a)), False, "straight")
    c = np.asarray(ball.center, float)
    R = ball.radius
    sigma = _side(a, b, c)
    if side == "long":
        sigma = -sigma
    short, long = wrap_angles(a, b, ball)
    wrap = short if side == "short" else long
    pa = np.arctan2(a[1] - c[1], a[0] - c[0])
    ta = np.arccos(R / np.linalg.norm(a - c))
    start = pa + sigma * ta
    n = max(1, int(np.ceil(wrap / dtheta)))
    th = start + sigma * wrap * np.linspace(0.0, 1.0, n + 1)
    arc = c + R * np.stack([np.cos(th), np.sin(th)], axis=1)
    verts = np.vstack([a, arc, b])
    return GeodesicPath(verts, disk_path_length(a, b, ball, side), True, side)


def _initial_polyline(problem: GeodesicProblem, n_points: int, init: str) -> np.ndarray:
    a = np.asarray(problem.a, float)
    b = np.asarray(problem.b, float)
    t = np.linspace(0.0, 1.0, n_points + 2)[:, None]
    if init == "straight":
        return a + t * (b - a)
    c = np.asarray(getattr(problem.body, "center", np.zeros(2)), float)
    reach = 1.5 * problem.body.diameter
    # the short side is where the chord passes the centre
    ab = b - a
    normal = np.array([-ab[1], ab[0]]) / np.linalg.norm(ab)
    off = np.dot(0.5 * (a + b) - c, normal)
    s = np.sign(off) if off != 0 else _side(a, b, c)
    if init == "long":
        s = -s
    elif init != "short":
        raise ValueError(f"unknown initialisation {init!r}")
    apex = c + s * reach * normal
    half = (n_points + 2) // 2
    first = a + np.linspace(0.0, 1.0, half, endpoint=False)[:, None] * (apex - a)
    second = apex + np.linspace(0.0, 1.0, n_points + 2 - half)[:, None] * (b - apex)
    return np.vstack([first, second])


def _closest_on_segments(v: np.ndarray, body: ConvexBody) -> np.ndarray:
    """Per segment, the point nearest the centre of a disk (the midpoint for other bodies)."""
    a, b = v[:-1], v[1:]
    if not isinstance(body, Ball):
        return 0.5 * (a + b)
    c = np.asarray(body.center, float)
    ab = b - a
    denom = np.sum(ab * ab, axis=-1)
    t = np.where(denom > 0, np.sum((c - a) * ab, axis=-1) / np.where(denom > 0, denom, 1.0), 0.5)
    return a + np.clip(t, 0.0, 1.0)[:, None] * ab


def _push_segments(v: np.ndarray, body: ConvexBody) -> None:
    """Translate segments that enter the body outward by the projection step of their deepest point."""
    q = _closest_on_segments(v, body)
    inside = body.contains(q)
    if not np.any(inside):
        return
    disp = np.zeros_like(q)
    disp[inside] = body.project_out(q[inside]) - q[inside]
    n = len(v) - 1
    shift = np.zeros_like(v)
    seg = np.flatnonzero(inside)
    # a segment ending at a fixed endpoint moves its free end twice as far
    np.add.at(shift, seg, np.where((seg == 0)[:, None], 0.0, disp[seg]))
    np.add.at(shift, seg + 1, np.where((seg == n - 1)[:, None], 0.0, disp[seg]))
    np.add.at(shift, seg[seg == 0] + 1, disp[seg[seg == 0]])
    np.add.at(shift, seg[seg == n - 1], disp[seg[seg == n - 1]])
    shift[0] = 0.0
    shift[-1] = 0.0
    v += shift


def shortest_path_discrete(problem: GeodesicProblem, n_points: int = 64, cfg: GeodesicConfig | None = None
                           ) -> GeodesicPath:
    """Minimise the polyline energy sum |v_{i+1} - v_i|^2 with vertices and segment midpoints kept outside O.

    Red-black over-relaxed vertex updates followed by projection; iterates until
    the largest vertex move falls below ``cfg.tol``.
    """
    cfg = cfg or GeodesicConfig()
    if n_points < 8:
        raise ValueError("need at least 8 interior vertices")
    body = problem.body
    v = _initial_polyline(problem, n_points, cfg.init)
    v[1:-1] = body.project_out(v[1:-1])
    idx = [np.arange(1, n_points + 1, 2), np.arange(2, n_points + 1, 2)]
    omega = cfg.omega
    for _ in range(cfg.max_iters):
        old = v.copy()
        for k in idx:
            target = 0.5 * (v[k - 1] + v[k + 1])
            v[k] = body.project_out(v[k] + omega * (target - v[k]))
        _push_segments(v, body)
        move = float(np.max(np.abs(v - old)))
        if move < cfg.tol:
            break
    else:
        raise RuntimeError(f"polyline did not settle in {cfg.max_iters} iterations (last move {move:.2e})")
    c = np.asarray(getattr(body, "center", np.zeros(2)), float)
    gap = float(np.min(segment_distance(c, v[:-1], v[1:]))) - getattr(body, "radius", 0.0)
    # chords of length l around a curved piece sit O(l^2) off it
    seg = float(np.max(np.linalg.norm(np.diff(v, axis=0), axis=1)))
    touching = gap <= seg**2 / body.diameter + 1e-9
    return GeodesicPath(v, polyline_length(v), bool(touching), cfg.init)


def random_instances(n: int, seed: int = 7, ball: Ball | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
    """Obstructed endpoint pairs at radii 1.5..3 around the unit disk, from a fixed seed."""
    ball = ball or Ball((0.0, 0.0), 1.0)
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        r = rng.uniform(1.5, 3.0, 2)
        th = rng.uniform(0, 2 * np.pi, 2)
        a = np.array([r[0] * np.cos(th[0]), r[0] * np.sin(th[0])]) + ball.center
        b = np.array([r[1] * np.cos(th[1]), r[1] * np.sin(th[1])]) + ball.center
        if obstructed(a, b, ball):
            out.append((a, b))
    return out
