"""Command line entry point: ``fblab run <config.json> --out <dir> [--check]``.

A config holds one ``{"experiment": {...}}`` object or a batch
``{"experiments": [...]}``. Every experiment writes into its own directory
and leaves a ``manifest.json`` there; the batch gets a top-level manifest
listing all of them.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import axisym as ax
from . import constraint_maps as cm
from . import geodesics as geo
from . import io
from . import scalar_obstacle as so
from .bodies import Ball, ConvexBody, Ellipsoid, HalfSpace, SlabCappedBall
from .domain import BallDomain, BoxDomain, _norm, build_grid, laplacian_apply
from .specialfunc import legendre_eval, legendre_zeros

logger = logging.getLogger(__name__)

KINDS = ("scalar_obstacle", "constraint_map", "flat_piece", "axisym", "geodesic", "fixtures")
EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3
_REQUIRED = object()


class UsageError(ValueError):
    """Invalid config; ``path`` is the dotted location of the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# ---------------------------------------------------------------------------
# config parsing


class _Fields:
    """Typed access to one JSON object, reporting errors with dotted paths."""

    def __init__(self, data, path: str):
        if not isinstance(data, dict):
            raise UsageError(path or "<root>", "expected an object")
        self.data = data
        self.path = path

    def where(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def has(self, key: str) -> bool:
        return key in self.data

    def raw(self, key: str, default=_REQUIRED):
        if key not in self.data:
            if default is _REQUIRED:
                raise UsageError(self.where(key), "missing")
            return default
        return self.data[key]

    def number(self, key: str, default=_REQUIRED, positive: bool = False, lo=None, hi=None) -> float:
        v = self.raw(key, default)
        if v is None:
            return v
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise UsageError(self.where(key), f"expected a finite number, got {v!r}")
        v = float(v)
        if positive and v <= 0:
            raise UsageError(self.where(key), f"must be > 0, got {v}")
        if lo is not None and v <= lo:
            raise UsageError(self.where(key), f"must be > {lo}, got {v}")
        if hi is not None and v >= hi:
            raise UsageError(self.where(key), f"must be < {hi}, got {v}")
        return v

    def integer(self, key: str, default=_REQUIRED, minimum: int | None = None) -> int:
        v = self.raw(key, default)
        if isinstance(v, bool) or not isinstance(v, int):
            raise UsageError(self.where(key), f"expected an integer, got {v!r}")
        if minimum is not None and v < minimum:
            raise UsageError(self.where(key), f"must be >= {minimum}, got {v}")
        return v

    def choice(self, key: str, options, default=_REQUIRED) -> str:
        v = self.raw(key, default)
        if v not in options:
            raise UsageError(self.where(key), f"expected one of {list(options)}, got {v!r}")
        return v

    def boolean(self, key: str, default=_REQUIRED) -> bool:
        v = self.raw(key, default)
        if not isinstance(v, bool):
            raise UsageError(self.where(key), f"expected true or false, got {v!r}")
        return v

    def vector(self, key: str, length: int | None = None, default=_REQUIRED, positive: bool = False) -> tuple:
        v = self.raw(key, default)
        if not isinstance(v, (list, tuple)) or not v:
            raise UsageError(self.where(key), f"expected a list of numbers, got {v!r}")
        if length is not None and len(v) != length:
            raise UsageError(self.where(key), f"expected {length} entries, got {len(v)}")
        out = []
        for i, x in enumerate(v):
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
                raise UsageError(f"{self.where(key)}[{i}]", f"expected a finite number, got {x!r}")
            if positive and x <= 0:
                raise UsageError(f"{self.where(key)}[{i}]", f"must be > 0, got {x}")
            out.append(float(x))
        return tuple(out)

    def sub(self, key: str, required: bool = False) -> "_Fields":
        if key not in self.data:
            if required:
                raise UsageError(self.where(key), "missing")
            return _Fields({}, self.where(key))
        return _Fields(self.data[key], self.where(key))


def parse_body(f: _Fields, dim: int | None = None) -> ConvexBody:
    kind = f.choice("kind", ("ball", "ellipsoid", "slab_capped_ball", "half_space"))
    try:
        if kind == "ball":
            body = Ball(f.vector("center", dim), f.number("radius", positive=True))
        elif kind == "ellipsoid":
            c = f.vector("center", dim)
            body = Ellipsoid(c, f.vector("semi_axes", len(c), positive=True))
        elif kind == "slab_capped_ball":
            body = SlabCappedBall(f.vector("center", dim), f.number("radius", positive=True),
                                  f.number("half_width", positive=True))
        else:
            p = f.vector("point", dim)
            body = HalfSpace(p, f.vector("normal", len(p)))
    except UsageError:
        raise
    except ValueError as exc:
        raise UsageError(f.path, str(exc)) from None
    return body


@dataclass
class ExperimentConfig:
    """One validated experiment; ``params`` holds the kind-specific settings."""

    kind: str
    name: str
    h: float | None
    params: dict
    solver: dict
    thresholds: dict
    raw: dict
    deterministic: bool = True


def _solver_common(s: _Fields) -> dict:
    out = {}
    if s.has("tol"):
        out["tol"] = s.number("tol", positive=True)
    if s.has("max_iters"):
        out["max_iters"] = s.integer("max_iters", minimum=1)
    if s.has("omega"):
        out["omega"] = s.number("omega", lo=0.0, hi=2.0)
    return out


def parse_experiment(obj, path: str = "experiment", index: int = 0) -> ExperimentConfig:
    f = _Fields(obj, path)
    kind = f.choice("kind", KINDS)
    name = f.raw("name", f"{index:02d}-{kind}")
    if not isinstance(name, str) or not name or "/" in name or name.startswith("."):
        raise UsageError(f.where("name"), "expected a plain directory name")
    if f.has("deterministic") and f.raw("deterministic") is not True:
        raise UsageError(f.where("deterministic"), "runs are always deterministic; omit or set true")
    s = f.sub("solver")
    t = f.sub("thresholds")
    solver = _solver_common(s)
    thresholds: dict = {}
    params: dict = {}
    h = None

    if kind == "scalar_obstacle":
        h = f.number("h", positive=True)
        params["problem"] = f.choice("problem", ("parabola_1d", "cross"), "parabola_1d")
        params["shift"] = f.number("shift", 0.0)
        params["depth"] = f.number("depth", 4.0, positive=True)
        for key in ("regular_lo", "regular_hi", "singular_max"):
            if t.has(key):
                thresholds[key] = t.number(key, lo=0.0, hi=1.0)
        if t.has("n_scales"):
            thresholds["n_scales"] = t.integer("n_scales", minimum=2)
    elif kind in ("constraint_map", "flat_piece"):
        h = f.number("h", positive=True)
        params["body"] = parse_body(f.sub("body", required=True), 3 if kind == "flat_piece" else None)
        dim = params["body"].dim
        d = f.sub("domain")
        params["domain_radius"] = d.number("radius", 2.0, positive=True)
        params["domain_center"] = d.vector("center", dim, (0.0,) * dim)
        params["boundary"] = f.choice("boundary", ("identity",), "identity")
        if s.has("method"):
            solver["method"] = s.choice("method", ("sor", "gradient"))
        if s.has("tau"):
            solver["tau"] = s.number("tau", positive=True)
        if s.has("cascade"):
            solver["cascade"] = s.integer("cascade", minimum=0)
        if s.has("contact_tol"):
            solver["contact_tol"] = s.number("contact_tol", positive=True)
        thresholds["eps"] = t.number("eps", 1.0, positive=True)
        thresholds["flat_tol"] = t.number("flat_tol", 1e-2, positive=True)
        thresholds["branch_tol"] = t.number("branch_tol", None, positive=True) if t.has("branch_tol") else None
        thresholds["slack"] = t.number("slack", 0.05, positive=True)
        if kind == "flat_piece":
            params["expect"] = f.choice("expect", ("flat", "none"))
            params["refine_h"] = f.number("refine_h", None, positive=True) if f.has("refine_h") else None
            thresholds["near_h"] = t.number("near_h", 2.0 if params["expect"] == "flat" else 4.0, positive=True)
        else:
            thresholds["radial"] = f.boolean("radial_checks", False)
            thresholds["osc_h"] = t.number("osc_h", 10.0, positive=True)
            thresholds["jump"] = t.number("jump", 1.99, positive=True)
            thresholds["radius_tol"] = t.number("radius_tol", 0.05, positive=True)
    elif kind == "axisym":
        h = f.number("h", positive=True)
        params["k"] = f.integer("k", minimum=1)
        params["scale"] = f.number("scale", 1.0, positive=True)
        for key in ("tau",):
            if s.has(key):
                solver[key] = s.number(key, positive=True)
        if s.has("cascade"):
            solver["cascade"] = s.integer("cascade", minimum=0)
        if s.has("momentum"):
            solver["momentum"] = s.boolean("momentum")
        solver.pop("omega", None)
        thresholds["branch_tol"] = t.number("branch_tol", 3 * h, positive=True)
        thresholds["cone_tol"] = t.number("cone_tol", 0.1, positive=True)
    elif kind == "geodesic":
        params["body"] = parse_body(f.sub("body", required=True), 2)
        if not isinstance(params["body"], Ball):
            raise UsageError(f.where("body.kind"), "geodesic experiments use a disk obstacle (kind 'ball')")
        params["n_random"] = f.integer("random_instances", 0, minimum=0)
        if params["n_random"] == 0 or f.has("a") or f.has("b"):
            params["a"] = f.vector("a", 2)
            params["b"] = f.vector("b", 2)
        params["seed"] = f.integer("seed", 7)
        params["init"] = f.choice("init", ("short", "long", "straight"), "short")
        params["n_points"] = f.integer("n_points", 64, minimum=8)
        params["expect_length"] = f.number("expect_length", None, positive=True) if f.has("expect_length") else None
        thresholds["rel_tol"] = t.number("rel_tol", 0.01, positive=True)
    else:  # fixtures
        h = f.number("h", positive=True)
        ks = f.raw("k", [2, 3, 4, 5, 6])
        if not isinstance(ks, list) or not ks or not all(isinstance(k, int) and not isinstance(k, bool) and k >= 1
                                                         for k in ks):
            raise UsageError(f.where("k"), "expected a list of integers >= 1")
        params["k"] = ks
        params["legendre_n_max"] = f.integer("legendre_n_max", 50, minimum=1)
        thresholds["laplacian_factor"] = t.number("laplacian_factor", 10.0, positive=True)
        thresholds["branch_tol"] = t.number("branch_tol", h, positive=True)
        thresholds["zero_tol"] = t.number("zero_tol", 1e-12, positive=True)
    return ExperimentConfig(kind, name, h, params, solver, thresholds, obj)


def parse_config(data) -> list[ExperimentConfig]:
    root = _Fields(data, "")
    if root.has("experiment") == root.has("experiments"):
        raise UsageError("experiment", "give exactly one of 'experiment' or 'experiments'")
    if root.has("experiment"):
        return [parse_experiment(data["experiment"], "experiment")]
    items = data["experiments"]
    if not isinstance(items, list) or not items:
        raise UsageError("experiments", "expected a non-empty list")
    exps = [parse_experiment(e, f"experiments[{i}]", i) for i, e in enumerate(items)]
    names = [e.name for e in exps]
    for i, n in enumerate(names):
        if names.index(n) != i:
            raise UsageError(f"experiments[{i}].name", f"duplicate name {n!r}")
    return exps


# ---------------------------------------------------------------------------
# runners: each returns (summary, checks) and records files in ``out``


@dataclass
class _Outputs:
    root: Path
    files: list[Path] = field(default_factory=list)
    normalization: dict = field(default_factory=dict)

    def add(self, rec: io.ExportRecord):
        self.files.extend(rec.paths)
        self.normalization.update({k: list(v) for k, v in rec.normalization.items()})

    def table(self, name: str, rows: list[dict]):
        self.files.append(io.write_table(self.root / name, rows))

    def field(self, stem: str, values, grid=None, name="u", pgm=True, mask=None):
        self.add(io.export_field(values, self.root / stem, "csv", grid, name))
        if pgm:
            self.add(io.export_field(values, self.root / stem, "pgm", grid, name, mask))


def _run_scalar(cfg: ExperimentConfig, out: _Outputs):
    h = cfg.h
    p = cfg.params
    problem = so.parabola_1d(h) if p["problem"] == "parabola_1d" else so.cross_obstacle(h, p["depth"])
    if p["shift"]:
        problem = problem.shifted(p["shift"])
    u = so.solve_psor(problem, so.PSORConfig(**cfg.solver))
    rep = so.contact_report(u, problem, so.DensityConfig(**cfg.thresholds))
    grid = problem.grid
    out.field("solution", u, grid, "u", pgm=grid.dim == 2, mask=grid.active)
    out.table("free_boundary.csv", [
        {"face": i, **{f"x{a}": float(m[a]) for a in range(grid.dim)}} for i, m in enumerate(rep.face_midpoints)
    ])
    pts = grid.coords.reshape(-1, grid.dim)
    out.table("classes.csv", [
        {**{f"x{a}": float(pts[n][a]) for a in range(grid.dim)}, "class": c.value,
         "densities": rep.densities[n]} for n, c in sorted(rep.classes.items())
    ])
    summary = {"n_faces": int(len(rep.face_midpoints)), "counts": rep.counts(),
               "lcp_residual": so.lcp_residual(u, problem)}
    checks = {}
    if p["problem"] == "parabola_1d" and not p["shift"]:
        a = 1.0 - math.sqrt(0.5)
        ends = sorted(float(m[0]) for m in rep.face_midpoints)
        err = float(np.max(np.abs(u - so.parabola_1d_exact(grid.coords[:, 0]))))
        summary.update({"free_boundary": ends, "max_error": err})
        checks["free_boundary_within_2h"] = (len(ends) == 2 and abs(ends[0] + a) <= 2 * h
                                             and abs(ends[1] - a) <= 2 * h)
        checks["max_error_within_5h"] = err <= 5 * h
    elif p["problem"] == "cross":
        n_sing = rep.counts()["singular"]
        summary["n_singular"] = n_sing
        checks["singular_points_present" if not p["shift"] else "no_singular_points"] = (
            n_sing >= 1 if not p["shift"] else n_sing == 0)
    return summary, checks


def _constraint_solve(cfg: ExperimentConfig):
    p = cfg.params
    body = p["body"]
    grid = build_grid(BallDomain(p["domain_center"], p["domain_radius"]), cfg.h)
    problem = cm.ConstraintMapProblem.from_function(grid, body, cm.identity)
    u = cm.solve_projected_gradient(problem, cm.ConstraintMapConfig(**cfg.solver), g_fn=cm.identity)
    return grid, body, u


def _export_map(out: _Outputs, grid, body, u, contact):
    out.field("u", u, grid, "u", mask=grid.active)
    d = np.zeros(grid.shape)
    d[grid.active] = np.maximum(body.signed_distance(u[grid.active]), 0.0)
    out.field("dist", d, grid, "d", mask=grid.active)
    fb = cm.free_boundary(grid, contact)
    out.table("free_boundary.csv", [{**{"xyz"[a]: float(m[a]) for a in range(grid.dim)},
                                     "r": float(np.linalg.norm(m))} for m in fb])
    return fb


def _run_constraint_map(cfg: ExperimentConfig, out: _Outputs):
    grid, body, u = _constraint_solve(cfg)
    th = cfg.thresholds
    h = grid.h
    contact = cm.contact_mask(grid, u, body, cfg.solver.get("contact_tol", 1e-10))
    fb = _export_map(out, grid, body, u, contact)
    geom = cm.singularity_geometry(grid, u, body, th["eps"], th["flat_tol"], cfg.solver.get("contact_tol", 1e-10))
    rep = geom["report"]
    cand_pts = rep.points()
    out.table("candidates.csv", geom["candidates"])
    energy = cm.dirichlet_energy(grid, u)
    sd = body.signed_distance(u[grid.active])
    summary = {"energy": energy, "n_candidates": len(rep.candidates), "n_flagged": int(len(rep.flagged)),
               "candidates": cand_pts.tolist(), "n_free_boundary_faces": int(len(fb)),
               "min_signed_distance": float(np.min(sd)),
               "sweeps": len(cm.solve_projected_gradient.energies) - 1}
    checks = {"feasible": bool(np.min(sd) >= -1e-8)}
    branch = cm.detect_branch_points(grid, u, body, th["branch_tol"])
    summary["n_branch"] = len(branch)
    if th["radial"]:
        # ball-in-ball with identity data: compare against the radial oracle
        prof = cm.radial_profile(cfg.params["domain_radius"])
        r = np.linalg.norm(fb, axis=1)
        summary.update({"rho_star": prof.rho_star, "fb_radius_min": float(r.min()) if len(r) else None,
                        "fb_radius_max": float(r.max()) if len(r) else None,
                        "fb_radius_mean": float(r.mean()) if len(r) else None})
        checks["free_boundary_radius"] = bool(len(r) and np.max(np.abs(r - prof.rho_star)) <= th["radius_tol"])
        near_origin = [float(np.linalg.norm(q)) for q in cand_pts]
        checks["single_candidate_at_origin"] = (len(near_origin) == 1
                                                and near_origin[0] <= math.sqrt(grid.dim) * h + 1e-12)
        # monotonicity at the candidate and at a few interior points, plus the x/|x| fixture
        rows = []
        origin_pts = [q for q in cand_pts] + [np.zeros(grid.dim), np.r_[0.25, np.zeros(grid.dim - 1)],
                                               np.r_[0.0, 0.5, np.zeros(grid.dim - 2)]]
        radii = cm.dyadic_radii(h, 0.25)
        mono_ok = True
        for q in origin_pts:
            m = cm.rescaled_energy(grid, u, q, radii, th["slack"])
            mono_ok &= m.monotone
            rows += [{"field": "u", "x0": list(m.x0), "r": float(rr), "E": float(e), "E_over_8pi": float(e / (8 * np.pi))}
                     for rr, e in zip(m.radii, m.values)]
        hedgehog = np.where(grid.active[..., None], grid.coords / np.maximum(_norm(grid.coords), 1e-300)[..., None],
                            0.0)
        mh = cm.rescaled_energy(grid, hedgehog, np.zeros(grid.dim), radii, th["slack"])
        rows += [{"field": "x/|x|", "x0": list(mh.x0), "r": float(rr), "E": float(e), "E_over_8pi": float(e / (8 * np.pi))}
                 for rr, e in zip(mh.radii, mh.values)]
        out.table("monotonicity.csv", rows)
        checks["monotone_on_solution"] = bool(mono_ok)
        checks["monotone_on_x_over_norm"] = mh.monotone
        checks["x_over_norm_constant_8pi"] = bool(np.all(np.abs(mh.values / (8 * np.pi) - 1.0) <= th["slack"]))
        # measure across the discrete singular point (the candidate nearest the origin), origin row for reference
        at = min(cand_pts, key=lambda q: float(np.linalg.norm(q)), default=np.zeros(grid.dim))
        dd = cm.distance_diagnostics(grid, u, body, centers=[np.asarray(at), np.zeros(grid.dim)])
        out.table("distance.csv", dd.table)
        row = dd.table[0]
        summary.update({"osc_d": row["osc_d"], "direction_jump": row["direction_jump"]})
        checks["distance_oscillation_within_10h"] = row["osc_d"] <= th["osc_h"] * h
        checks["direction_jump_is_2"] = row["direction_jump"] >= th["jump"]
        near_fb = [c for c in geom["candidates"] if c["dist_to_fb"] <= 4 * h + 1e-12]
        checks["no_candidate_within_4h_of_free_boundary"] = not near_fb
    return summary, checks


def _run_flat_piece(cfg: ExperimentConfig, out: _Outputs):
    p, th = cfg.params, cfg.thresholds
    grid, body, u = _constraint_solve(cfg)
    contact = cm.contact_mask(grid, u, body, cfg.solver.get("contact_tol", 1e-10))
    _export_map(out, grid, body, u, contact)
    geom = cm.singularity_geometry(grid, u, body, th["eps"], th["flat_tol"], cfg.solver.get("contact_tol", 1e-10))
    out.table("candidates.csv", geom["candidates"])
    rows = geom["candidates"]
    near = [r for r in rows if r["dist_to_fb_h"] <= th["near_h"] + 1e-9]
    min_h = min((r["dist_to_fb_h"] for r in rows), default=math.inf)
    summary = {"h": cfg.h, "n_candidates": len(rows), "min_distance_h": min_h,
               "a_candidate_on_free_boundary": bool(near), "b_image_on_flat_piece": any(r["image_flat"] for r in near)}
    checks = {}
    if p["expect"] == "flat":
        ok = summary["a_candidate_on_free_boundary"] and summary["b_image_on_flat_piece"]
        if not ok and p["refine_h"]:
            fine = ExperimentConfig(cfg.kind, cfg.name, p["refine_h"], p, cfg.solver, th, cfg.raw)
            g2, b2, u2 = _constraint_solve(fine)
            geo2 = cm.singularity_geometry(g2, u2, b2, th["eps"], th["flat_tol"], cfg.solver.get("contact_tol", 1e-10))
            min2 = min((r["dist_to_fb_h"] for r in geo2["candidates"]), default=math.inf)
            summary["refined_min_distance_h"] = min2
            ok = min2 < min_h
            checks["distance_trend_decreases"] = ok
        else:
            checks["candidate_on_flat_free_boundary"] = ok
    else:
        checks["no_candidate_near_free_boundary"] = not near
    return summary, checks


def _run_axisym(cfg: ExperimentConfig, out: _Outputs):
    p, th = cfg.params, cfg.thresholds
    problem = ax.AxisymProblem(cfg.h, p["k"], p["scale"])
    u = ax.solve_axisym(problem, ax.AxisymConfig(**cfg.solver))
    grid = problem.grid
    out.field("u", u, grid, "u", mask=grid.active)
    reports = ax.axis_branch_check(grid, u, p["k"], th["branch_tol"])
    out.table("axis.csv", [{"z": r.z, "gap": r.gap, "contact": r.contact, "free_boundary": r.free_boundary,
                            "branch": "" if r.branch is None else r.branch, **r.partials} for r in reports])
    contact = ax.contact_mask(grid, u)
    fb_axis = [r for r in reports if r.free_boundary]
    cones = []
    for r in fb_axis:
        try:
            cones.append(ax.cone_fit(grid, contact, (0.0, r.z), p["k"]))
        except ValueError:
            cones.append(None)
    out.table("cone.csv", [asdict(c) if c else {"vertex": [0.0, r.z], "fit": "no faces in window"}
                           for c, r in zip(cones, fb_axis)])
    sym = float(max(np.max(np.abs(u[:, ::-1, 0] - u[..., 0])), np.max(np.abs(u[:, ::-1, 1] + u[..., 1]))))
    summary = {"energy": ax.reduced_energy(grid, u, p["k"]), "reflection_error": sym,
               "axis_free_boundary_z": [r.z for r in fb_axis],
               "max_axis_partial": max((max(abs(v) for v in r.partials.values()) for r in fb_axis), default=None),
               "cone_cos_phi": [c.cos_phi if c else None for c in cones],
               "cone_gap": [c.gap if c else None for c in cones]}
    checks = {
        "axis_free_boundary_present": bool(fb_axis),
        "axis_free_boundary_branch": bool(fb_axis) and all(r.branch for r in fb_axis),
        "cone_angle_quantized": bool(cones) and all(c is not None and (c.axis_hugging or c.gap <= th["cone_tol"])
                                                    for c in cones),
    }
    return summary, checks


def _run_geodesic(cfg: ExperimentConfig, out: _Outputs):
    p, th = cfg.params, cfg.thresholds
    ball = p["body"]
    gcfg = geo.GeodesicConfig(init=p["init"], **cfg.solver)
    rows = []
    summary: dict = {}
    checks = {}
    if "a" in p:
        prob = geo.GeodesicProblem(p["a"], p["b"], ball)
        path = geo.shortest_path_discrete(prob, p["n_points"], gcfg)
        side = "long" if p["init"] == "long" else "short"
        closed = geo.disk_path_length(p["a"], p["b"], ball, side)
        out.table("path.csv", [{"x": float(v[0]), "y": float(v[1])} for v in path.vertices])
        summary.update({"length": path.length, "closed_form": closed, "touching": path.touching,
                        "relative_error": abs(path.length - closed) / closed})
        checks["matches_closed_form"] = abs(path.length - closed) <= th["rel_tol"] * closed
        if p["expect_length"] is not None:
            summary["expect_length"] = p["expect_length"]
            checks["matches_expected_length"] = abs(path.length - p["expect_length"]) <= th["rel_tol"] * p["expect_length"]
    if p["n_random"]:
        for i, (a, b) in enumerate(geo.random_instances(p["n_random"], p["seed"], ball)):
            path = geo.shortest_path_discrete(geo.GeodesicProblem(tuple(a), tuple(b), ball), p["n_points"],
                                              geo.GeodesicConfig(init="short", **cfg.solver))
            closed = geo.disk_path_length(a, b, ball, "short")
            rows.append({"instance": i, "ax": a[0], "ay": a[1], "bx": b[0], "by": b[1], "discrete": path.length,
                         "closed_form": closed, "relative_error": abs(path.length - closed) / closed})
        out.table("instances.csv", rows)
        worst = max(r["relative_error"] for r in rows)
        summary["max_relative_error"] = worst
        checks["random_instances_agree"] = worst <= th["rel_tol"]
    return summary, checks


def _run_fixtures(cfg: ExperimentConfig, out: _Outputs):
    p, th = cfg.params, cfg.thresholds
    h = cfg.h
    grid = build_grid(BoxDomain((-0.5, -0.5), (0.5, 0.5)), h)
    origin = int(np.ravel_multi_index(grid.index_of((0.0, 0.0)), grid.shape))
    rows = []
    lap_ok = branch_ok = True
    for k in p["k"]:
        u = cm.fixture_uk(k, grid)
        lap = laplacian_apply(grid, u)
        worst = float(np.max(np.abs(lap[grid.interior])))
        flagged = cm.detect_branch_points(grid, u, None, th["branch_tol"])
        lap_ok &= worst <= th["laplacian_factor"] * h * h
        branch_ok &= flagged == [origin]
        rows.append({"k": k, "max_laplacian": worst, "bound": th["laplacian_factor"] * h * h,
                     "max_laplacian_over_h2": worst / (h * h), "branch_nodes": len(flagged),
                     "origin_only": flagged == [origin]})
    out.table("fixtures.csv", rows)
    zrows = []
    zero_ok = True
    sym_ok = True
    interlace_ok = True
    prev = None
    for n in range(1, p["legendre_n_max"] + 1):
        z = legendre_zeros(n).zeros
        res = float(np.max(np.abs(legendre_eval(n, z))))
        zero_ok &= res <= th["zero_tol"]
        sym_ok &= bool(np.allclose(z, -z[::-1], rtol=0, atol=1e-14))
        if prev is not None:
            interlace_ok &= bool(np.all(z[:-1] < prev) and np.all(prev < z[1:]))
        prev = z
        zrows.append({"n": n, "max_residual": res, "zeros": z})
    out.table("legendre_zeros.csv", zrows)
    closed = {3: [-math.sqrt(0.6), 0.0, math.sqrt(0.6)],
              5: sorted(s * math.sqrt(5 + e * 2 * math.sqrt(10 / 7)) / 3 for s in (-1, 1) for e in (-1, 1)) + [0.0]}
    closed[5].sort()
    closed_ok = all(np.max(np.abs(legendre_zeros(n).zeros - np.asarray(v))) <= 1e-6 for n, v in closed.items())
    checks = {"laplacian_within_10h2": bool(lap_ok), "branch_only_origin": bool(branch_ok),
              "legendre_residual": bool(zero_ok), "legendre_symmetry": bool(sym_ok),
              "legendre_interlacing": bool(interlace_ok), "legendre_closed_forms": bool(closed_ok)}
    return {"fixtures": rows}, checks


RUNNERS = {
    "scalar_obstacle": _run_scalar,
    "constraint_map": _run_constraint_map,
    "flat_piece": _run_flat_piece,
    "axisym": _run_axisym,
    "geodesic": _run_geodesic,
    "fixtures": _run_fixtures,
}


# ---------------------------------------------------------------------------
# orchestration


def _versions() -> dict:
    import numba
    import scipy

    from importlib.metadata import PackageNotFoundError, version

    try:
        pkg = version("artifact")
    except PackageNotFoundError:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "fblab": pkg}


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Run one experiment into ``out_dir`` and return its manifest (also written as manifest.json)."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    out = _Outputs(root)
    t0 = time.perf_counter()
    status, error = "ok", None
    summary: dict = {}
    checks: dict = {}
    try:
        summary, checks = RUNNERS[cfg.kind](cfg, out)
        if not all(checks.values()):
            status = "check_failed"
    except (cm.SolverError, so.ConvergenceError, ax.AxisymError, RuntimeError) as exc:
        status, error = "solver_failure", str(exc)
        diag = getattr(exc, "diagnostics", None) or {}
        for key in ("residual",):
            if hasattr(exc, key):
                diag[key] = getattr(exc, key)
        diag_path = root / "diagnostics.json"
        diag_path.write_text(json.dumps(_jsonable({"error": error, **diag}), indent=2, sort_keys=True) + "\n")
        out.files.append(diag_path)
        it = getattr(exc, "iterate", None)
        if it is not None:
            p = root / "last_iterate.npy"
            np.save(p, np.asarray(it))
            out.files.append(p)
    wall = time.perf_counter() - t0
    manifest = {
        "name": cfg.name,
        "kind": cfg.kind,
        "config": cfg.raw,
        "deterministic": True,
        "versions": _versions(),
        "wall_time_s": wall,
        "status": status,
        "error": error,
        "checks": checks,
        "summary": summary,
        "normalization": out.normalization,
        "files": [{"path": p.name, "bytes": p.stat().st_size, "sha256": _sha256(p)} for p in out.files],
    }
    (root / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return _jsonable(manifest)


def _worker(args):
    cfg, out_dir = args
    return run_experiment(cfg, out_dir)


def worker_count(n_jobs: int) -> int:
    env = os.environ.get("FB_LAB_THREADS")
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise UsageError("FB_LAB_THREADS", f"expected a positive integer, got {env!r}") from None
        if cap < 1:
            raise UsageError("FB_LAB_THREADS", f"expected a positive integer, got {env!r}")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_jobs))


def run_batch(exps: list[ExperimentConfig], out_dir) -> list[dict]:
    """Run experiments (in worker processes when allowed) and write the batch manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(e, out / e.name) for e in exps]
    workers = worker_count(len(jobs))
    if workers == 1:
        manifests = [_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            manifests = list(pool.map(_worker, jobs))
    batch = {
        "deterministic": True,
        "workers": workers,
        "experiments": [{"name": m["name"], "kind": m["kind"], "status": m["status"], "checks": m["checks"],
                         "manifest": f"{m['name']}/manifest.json",
                         "files": [f"{m['name']}/{f['path']}" for f in m["files"]]} for m in manifests],
    }
    (out / "manifest.json").write_text(json.dumps(batch, indent=2, sort_keys=True) + "\n")
    return manifests


def exit_status(manifests: list[dict], check: bool) -> int:
    if any(m["status"] == "solver_failure" for m in manifests):
        return EXIT_SOLVER
    if check and any(m["status"] == "check_failed" for m in manifests):
        return EXIT_CHECK
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fblab", description="Free-boundary experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiments in a JSON config")
    run.add_argument("config", type=Path)
    run.add_argument("--out", type=Path, default=Path("fblab-out"))
    run.add_argument("--check", action="store_true", help="exit nonzero when a built-in check fails")
    run.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        data = json.loads(args.config.read_text())
    except OSError as exc:
        print(f"fblab: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except json.JSONDecodeError as exc:
        print(f"fblab: config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        exps = parse_config(data)
        worker_count(len(exps))
    except UsageError as exc:
        print(f"fblab: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    manifests = run_batch(exps, args.out)
    for m in manifests:
        failed = [k for k, v in m["checks"].items() if not v]
        line = f"{m['name']}: {m['status']}"
        if failed:
            line += " (failed: " + ", ".join(failed) + ")"
        print(line)
    return exit_status(manifests, args.check)


if __name__ == "__main__":
    sys.exit(main())
