import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fblab.domain import BoxDomain, build_grid, laplacian_apply
from fblab.scalar_obstacle import (
    ConvergenceError, DensityConfig, PointClass, PSORConfig, ScalarObstacleProblem, classify_free_boundary_point,
    contact_report, cross_obstacle, lcp_residual, parabola_1d, parabola_1d_exact, report_from_mask,
    schaeffer_perturbation_experiment, solve_psor,
)

A = 1 - math.sqrt(0.5)
SQUARE = BoxDomain((-1.0, -1.0), (1.0, 1.0))


def problem2d(h, psi_fn, g_fn=lambda x: np.zeros(len(x))):
    return ScalarObstacleProblem.from_functions(build_grid(SQUARE, h), psi_fn, g_fn)


def test_inactive_obstacle_gives_zero():
    p = problem2d(1 / 16, lambda x: -np.ones(len(x)))
    u = solve_psor(p, PSORConfig(tol=1e-12))
    assert np.max(np.abs(u)) < 1e-10


def test_parabola_1d():
    h = 1 / 128
    p = parabola_1d(h)
    u = solve_psor(p, PSORConfig(tol=1e-9))
    x = p.grid.coords[:, 0]
    rep = contact_report(u, p)
    ends = np.sort(rep.face_midpoints[:, 0])
    assert np.allclose(ends, [-A, A], atol=2 * h)
    assert np.all(u >= p.psi)
    assert np.max(np.abs(u - parabola_1d_exact(x))) <= 5 * h
    # slope of the tangent lines outside the contact set
    out = (x > A + 4 * h) & p.grid.interior
    slope = np.polyfit(x[out], u[out], 1)[0]
    assert slope == pytest.approx(-2 * A, abs=1e-3)
    assert lcp_residual(u, p) <= 1e-9
    assert p.superharmonic


def test_admissibility():
    grid = build_grid(BoxDomain((-1.0,), (1.0,)), 1 / 8)
    with pytest.raises(ValueError):
        ScalarObstacleProblem.from_functions(grid, lambda x: 0.5 - x[:, 0] ** 2, lambda x: np.full(len(x), -0.6))
    p = parabola_1d(1 / 8)
    with pytest.raises(ValueError):
        solve_psor(p, PSORConfig(omega=2.0))
    with pytest.raises(ConvergenceError) as err:
        solve_psor(p, PSORConfig(max_iters=2, tol=1e-14))
    assert err.value.residual > 0


def test_lcp_residual_cases():
    p = parabola_1d(1 / 64)
    grid = p.grid
    naive = np.maximum(p.psi, 0.0)
    naive[grid.boundary] = 0.0
    assert lcp_residual(naive, p) > 0.1
    free = ScalarObstacleProblem.from_functions(build_grid(SQUARE, 1 / 16), lambda x: np.full(len(x), -1e9),
                                                lambda x: x[:, 0] - 0.5 * x[:, 1])
    u = free.grid.coords[..., 0] - 0.5 * free.grid.coords[..., 1]
    assert lcp_residual(u, free) < 1e-12


def square_mask(grid, fn):
    return fn(grid.coords[..., 0], grid.coords[..., 1]) & grid.interior


@pytest.mark.parametrize("mask_fn,point,expected", [
    (lambda x, y: x <= 0, (0.0, 0.1), PointClass.REGULAR),
    (lambda x, y: (x <= 0) & (y <= 0), (0.0, 0.0), PointClass.INDETERMINATE),
    (lambda x, y: np.abs(y) < 1e-9, (0.0, 0.0), PointClass.SINGULAR),
])
def test_synthetic_classes(mask_fn, point, expected):
    grid = build_grid(SQUARE, 1 / 64)
    rep = report_from_mask(grid, square_mask(grid, mask_fn))
    assert classify_free_boundary_point(rep, point) is expected
    for d in rep.densities.values():
        assert np.all((d >= 0) & (d <= 1))


def test_half_plane_density_value():
    grid = build_grid(SQUARE, 1 / 64)
    rep = report_from_mask(grid, square_mask(grid, lambda x, y: x <= 0))
    node = int(np.ravel_multi_index(grid.index_of((0.0, 0.0)), grid.shape))
    assert np.allclose(rep.densities[node], 0.5, atol=0.06)
    with pytest.raises(ValueError):
        classify_free_boundary_point(rep, (-0.5, 0.0))


def test_faces_separate_masks():
    grid = build_grid(SQUARE, 1 / 16)
    contact = square_mask(grid, lambda x, y: x**2 + y**2 < 0.3)
    rep = report_from_mask(grid, contact)
    flat = contact.ravel()
    assert np.all(flat[rep.faces[:, 0]]) and not np.any(flat[rep.faces[:, 1]])


def test_schaeffer_fixture():
    p = cross_obstacle(1 / 32)
    rows = schaeffer_perturbation_experiment(p, [0.0, 0.05])
    assert rows[0]["n_singular"] >= 1
    assert rows[1]["n_singular"] == 0
    flat = problem2d(1 / 16, lambda x: -np.ones(len(x)))
    for r in schaeffer_perturbation_experiment(flat, [0.0, 0.1]):
        assert r["n_free_boundary"] == 0


def test_energy_monotone_and_feasible():
    p = problem2d(1 / 16, lambda x: 0.3 - 2 * (x[:, 0] ** 2 + 0.5 * x[:, 1] ** 2))
    u = solve_psor(p, PSORConfig(tol=1e-8, track_energy=True))
    e = np.asarray(solve_psor.energies)
    assert np.all(np.diff(e) <= 1e-12 * e[0])
    assert np.all(u >= p.psi)


@given(st.floats(0.05, 0.4), st.floats(0.0, 0.3), st.floats(-0.5, 0.5))
def test_comparison_principle(c, lift, x0):
    def psi(x, extra=0.0):
        return c + extra * np.exp(-((x[:, 0] - x0) ** 2 + x[:, 1] ** 2) / 0.1) - 2 * (x[:, 0] ** 2 + x[:, 1] ** 2)

    lo = problem2d(1 / 8, psi)
    hi = problem2d(1 / 8, lambda x: psi(x, lift))
    cfg = PSORConfig(tol=1e-11)
    assert np.all(solve_psor(hi, cfg) >= solve_psor(lo, cfg) - 1e-9)


def test_mesh_convergence_of_endpoint():
    for h in (1 / 32, 1 / 64, 1 / 128):
        p = parabola_1d(h)
        rep = contact_report(solve_psor(p, PSORConfig(tol=1e-9)), p)
        assert np.max(np.abs(np.abs(rep.face_midpoints[:, 0]) - A)) <= 2 * h


def test_truncation_on_contact_is_bounded():
    # discrete second differences stay bounded across refinement
    peaks = []
    for h in (1 / 64, 1 / 128):
        p = parabola_1d(h)
        u = solve_psor(p, PSORConfig(tol=1e-10))
        peaks.append(np.max(np.abs(laplacian_apply(p.grid, u))))
    assert peaks[1] <= 1.5 * peaks[0]
