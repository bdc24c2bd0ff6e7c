import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fblab.bodies import Ball
from fblab.geodesics import (
    GeodesicConfig, GeodesicProblem, disk_path_length, obstructed, polyline_length, random_instances,
    segment_distance, shortest_path_discrete, shortest_path_disk,
)

DISK = Ball((0.0, 0.0), 1.0)
SYM = 2 * math.sqrt(3) + math.pi / 3


def test_closed_form_examples():
    p = shortest_path_disk((-2.0, 1.0), (2.0, 1.0), DISK)
    assert p.length == 4.0 and not p.touching
    p = shortest_path_disk((-2.0, 0.0), (2.0, 0.0), DISK)
    assert p.length == pytest.approx(SYM, abs=1e-12)
    assert p.touching
    # the segment from (-2, 0) to (0, 2) passes the centre at distance sqrt(2) > 1
    assert segment_distance((0.0, 0.0), (-2.0, 0.0), (0.0, 2.0))[0] == pytest.approx(math.sqrt(2))
    assert not obstructed((-2.0, 0.0), (0.0, 2.0), DISK)
    assert shortest_path_disk((-2.0, 0.0), (0.0, 2.0), DISK).length == pytest.approx(2 * math.sqrt(2))
    with pytest.raises(ValueError):
        shortest_path_disk((0.5, 0.0), (2.0, 0.0), DISK)


def test_sampled_arc_stays_outside():
    p = shortest_path_disk((-1.7, 0.4), (1.9, -0.9), DISK, dtheta=0.01)
    assert np.all(DISK.signed_distance(p.vertices) >= -1e-12)
    # the polyline through the sampled arc is a little shorter than the true arc
    assert p.length - polyline_length(p.vertices) < 1e-4


def test_discrete_short_and_long():
    prob = GeodesicProblem((-2.0, 0.0), (2.0, 0.0), DISK)
    short = shortest_path_discrete(prob)
    assert short.length == pytest.approx(SYM, rel=0.01)
    assert short.touching
    long = shortest_path_discrete(prob, cfg=GeodesicConfig(init="long"))
    # both wraps are pi/3 here: the long start lands on the mirror image
    assert long.length == pytest.approx(short.length, rel=1e-6)
    assert np.sign(np.mean(long.vertices[:, 1])) == -np.sign(np.mean(short.vertices[:, 1]))


def test_long_side_is_a_longer_stationary_path():
    prob = GeodesicProblem((-2.0, 0.5), (2.0, 0.5), DISK)
    short = shortest_path_discrete(prob)
    long = shortest_path_discrete(prob, cfg=GeodesicConfig(init="long"))
    assert short.length == pytest.approx(disk_path_length(prob.a, prob.b, DISK, "short"), rel=0.01)
    assert long.length == pytest.approx(disk_path_length(prob.a, prob.b, DISK, "long"), rel=0.01)
    assert long.length > short.length + 0.5


def test_unobstructed_is_straight():
    prob = GeodesicProblem((-2.0, 1.5), (2.0, 1.2), DISK)
    p = shortest_path_discrete(prob, cfg=GeodesicConfig(init="straight"))
    assert p.length == pytest.approx(math.hypot(4.0, 0.3), abs=1e-9)
    assert not p.touching


def test_random_instances_and_lower_bound():
    for a, b in random_instances(6, seed=3):
        p = shortest_path_discrete(GeodesicProblem(tuple(a), tuple(b), DISK))
        closed = disk_path_length(a, b, DISK)
        assert closed - 1e-6 <= p.length <= closed * 1.01
        assert np.all(DISK.signed_distance(p.vertices) >= -1e-12)
        mid = 0.5 * (p.vertices[:-1] + p.vertices[1:])
        assert np.all(DISK.signed_distance(mid) >= -1e-3)


@given(st.floats(0, 2 * math.pi), st.floats(0.6, 1.5), st.floats(1.3, 3.0), st.floats(1.3, 3.0))
def test_reversal_symmetry(theta, gap, ra, rb):
    a = (ra * math.cos(theta), ra * math.sin(theta))
    b = (rb * math.cos(theta + math.pi - gap), rb * math.sin(theta + math.pi - gap))
    fwd = shortest_path_discrete(GeodesicProblem(a, b, DISK), 33)
    bwd = shortest_path_discrete(GeodesicProblem(b, a, DISK), 33)
    assert fwd.length == pytest.approx(bwd.length, abs=1e-10)
    assert np.allclose(fwd.vertices, bwd.reversed().vertices, atol=1e-5)


def test_endpoint_validation():
    with pytest.raises(ValueError):
        GeodesicProblem((0.2, 0.0), (2.0, 0.0), DISK)
    with pytest.raises(ValueError):
        shortest_path_discrete(GeodesicProblem((-2.0, 0.0), (2.0, 0.0), DISK), 4)
