import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fblab.domain import (
    BOUNDARY, EXTERIOR, INTERIOR, AnnulusDomain, BallDomain, BoxDomain, GridError, ball_energy, build_grid,
    dirichlet_energy, gradient_apply, laplacian_apply, node_energy_density, order_free_sum,
)

SQUARE = BoxDomain((0.0, 0.0), (1.0, 1.0))


def hedgehog(grid):
    x = grid.coords
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.where(r > 0, x / np.where(r > 0, r, 1.0), 0.0)


def test_unit_square_coarse():
    g = build_grid(SQUARE, 0.5)
    assert g.shape == (3, 3)
    assert g.interior.sum() == 1 and g.node_class[1, 1] == INTERIOR


def test_ball_classes():
    g = build_grid(BallDomain((0.0, 0.0), 1.0), 0.25)
    assert g.node_class[g.index_of((0.0, 0.0))] == INTERIOR
    assert g.node_class[g.index_of((1.0, 0.0))] == BOUNDARY
    assert g.node_class[g.index_of((1.5, 0.0))] == EXTERIOR


def test_too_coarse():
    with pytest.raises(GridError):
        build_grid(BallDomain((0.0, 0.0), 0.1), 0.5)


def test_interior_neighbours_are_active():
    g = build_grid(BallDomain((0.1, -0.2, 0.0), 0.8), 0.1)
    for a in range(3):
        for s in (1, -1):
            assert np.all(np.roll(g.active, s, axis=a)[g.interior])


def test_build_is_deterministic():
    a = build_grid(AnnulusDomain((0.0, 0.0), 0.3, 1.0), 1 / 16)
    b = build_grid(AnnulusDomain((0.0, 0.0), 0.3, 1.0), 1 / 16)
    assert np.array_equal(a.node_class, b.node_class)


def test_laplacian_exact_on_quadratics():
    g = build_grid(SQUARE, 1 / 16)
    lap = laplacian_apply(g, g.coords[..., 0] ** 2)
    assert np.allclose(lap[g.interior], 2.0, atol=1e-9)
    aff = laplacian_apply(g, 3 * g.coords[..., 0] - g.coords[..., 1] + 1)
    assert np.max(np.abs(aff)) < 1e-9


def test_laplacian_truncation_constant_and_order():
    consts = []
    for h in (1 / 32, 1 / 64):
        g = build_grid(SQUARE, h)
        z = g.coords[..., 0] + 1j * g.coords[..., 1]
        res = np.max(np.abs(laplacian_apply(g, (z**3).real)[g.interior]))
        consts.append(res / h**2)
    # Re z^3 has vanishing fourth derivatives, so only round-off remains
    assert max(consts) <= 10
    g = build_grid(BoxDomain((-0.5, -0.5), (0.5, 0.5)), 1 / 16)
    res = []
    for h in (1 / 16, 1 / 32):
        g = build_grid(BoxDomain((-0.5, -0.5), (0.5, 0.5)), h)
        f = np.exp(g.coords[..., 0]) * np.cos(g.coords[..., 1])
        res.append(np.max(np.abs(laplacian_apply(g, f)[g.interior])))
    assert 3.5 < res[0] / res[1] < 4.5


def test_gradient_examples():
    g = build_grid(SQUARE, 1 / 128)
    x, y = g.coords[..., 0], g.coords[..., 1]
    d = gradient_apply(g, 3 * x + 2 * y)
    assert np.allclose(d[g.interior], [3.0, 2.0])
    assert np.all(gradient_apply(g, np.full(g.shape, 4.0)) == 0)
    d = gradient_apply(g, x**2)
    assert abs(d[g.index_of((0.5, 0.3))][0] - 1.0) <= 1e-10


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31 - 1))
def test_operators_linear(a, b, seed):
    g = build_grid(BallDomain((0.0, 0.0), 1.0), 0.2)
    r = np.random.default_rng(seed)
    f1, f2 = r.normal(size=g.shape), r.normal(size=g.shape)
    for op in (laplacian_apply, gradient_apply):
        lhs = op(g, a * f1 + b * f2)
        rhs = a * op(g, f1) + b * op(g, f2)
        assert np.allclose(lhs, rhs, atol=1e-8 * (1 + abs(a) + abs(b)) / g.h**2)


def test_energy_examples():
    g = build_grid(SQUARE, 1 / 16)
    assert dirichlet_energy(g, np.full(g.shape + (2,), 0.7)) == 0.0
    # straddling boundary edges carry half weight, so the identity gives exactly dim * area
    assert dirichlet_energy(g, g.coords) == pytest.approx(2.0, rel=1e-12)


def test_hedgehog_annulus_energy():
    g = build_grid(AnnulusDomain((0.0, 0.0, 0.0), 0.5, 1.0), 1 / 32)
    assert dirichlet_energy(g, hedgehog(g)) == pytest.approx(8 * math.pi * 0.5, rel=0.02)


def test_ball_energy_examples():
    g = build_grid(BallDomain((0.0, 0.0, 0.0), 1.0), 1 / 32)
    assert ball_energy(g, np.ones(g.shape + (3,)), (0, 0, 0), 0.5) == 0.0
    r = 0.4
    assert ball_energy(g, g.coords, (0.1, 0.0, 0.0), r) == pytest.approx(3 * 4 / 3 * math.pi * r**3, rel=0.02)
    assert ball_energy(g, hedgehog(g), (0, 0, 0), 0.5) == pytest.approx(8 * math.pi * 0.5, rel=0.05)
    with pytest.raises(ValueError):
        ball_energy(g, g.coords, (0, 0, 0), 0.5 * g.h)


def test_energy_equals_big_ball(rng):
    g = build_grid(BallDomain((0.0, 0.0), 1.0), 1 / 8)
    u = rng.normal(size=g.shape + (3,))
    assert ball_energy(g, u, (0.0, 0.0), 3.0) == pytest.approx(dirichlet_energy(g, u), rel=1e-12)
    assert np.sum(node_energy_density(g, u)) == pytest.approx(dirichlet_energy(g, u), rel=1e-12)


@given(st.integers(0, 2**31 - 1), st.floats(0.05, 1.0))
def test_ball_energy_monotone_in_radius(seed, r):
    g = build_grid(BallDomain((0.0, 0.0), 1.0), 1 / 8)
    u = np.random.default_rng(seed).normal(size=g.shape + (2,))
    r = max(r, g.h)
    assert ball_energy(g, u, (0.0, 0.0), r) <= ball_energy(g, u, (0.0, 0.0), r + g.h)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50), st.randoms())
def test_order_free_sum_ignores_order(vals, rnd):
    shuffled = list(vals)
    rnd.shuffle(shuffled)
    assert order_free_sum([np.array(vals)]) == order_free_sum([np.array(shuffled)])
    assert order_free_sum([np.array(vals)]) == pytest.approx(math.fsum(vals), abs=1e-9 * max(1.0, max(map(abs, vals))) * len(vals))
