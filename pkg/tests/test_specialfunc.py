import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import legendre as npleg

from fblab.specialfunc import legendre_deriv, legendre_eval, legendre_zeros


def test_endpoint_and_closed_forms():
    for n in range(51):
        assert legendre_eval(n, 1.0) == pytest.approx(1.0, abs=1e-13)
    assert legendre_eval(3, 0.5) == pytest.approx(-0.4375, abs=1e-15)
    assert abs(legendre_eval(5, 0.9061798)) <= 1e-6


def test_small_tables():
    assert np.array_equal(legendre_zeros(1).zeros, [0.0])
    r = math.sqrt(3 / 5)
    assert np.allclose(legendre_zeros(3).zeros, [-r, 0.0, r], atol=1e-12)
    inner, outer = (math.sqrt((35 - s * 2 * math.sqrt(70)) / 63) for s in (1, -1))
    assert np.allclose(legendre_zeros(5).zeros, [-outer, -inner, 0.0, inner, outer], atol=1e-6)


@pytest.mark.parametrize("n", [2, 7, 20, 50, 100])
def test_zeros_match_numpy_gauss_nodes(n):
    # independent oracle: eigenvalues of the Jacobi matrix
    nodes, _ = npleg.leggauss(n)
    assert np.allclose(legendre_zeros(n).zeros, nodes, atol=1e-13)


def test_residual_symmetry_interlacing():
    prev = None
    for n in range(1, 52):
        z = legendre_zeros(n).zeros
        assert len(z) == n and np.all(np.diff(z) > 0)
        assert np.max(np.abs(legendre_eval(n, z))) <= 1e-12
        assert np.array_equal(z, -z[::-1])
        if n % 2:
            assert z[n // 2] == 0.0
        if prev is not None:
            assert np.all(z[:-1] < prev) and np.all(prev < z[1:])
        prev = z


@given(st.integers(0, 60), st.floats(-1, 1))
def test_bounded_and_matches_numpy(n, x):
    v = legendre_eval(n, x)
    assert abs(v) <= 1 + 1e-12
    assert v == pytest.approx(npleg.legval(x, [0] * n + [1]), abs=1e-12)


@given(st.integers(1, 40), st.sampled_from([-1.0, 1.0, 0.3, -0.77]))
def test_derivative(n, x):
    ref = npleg.legval(x, npleg.legder([0] * n + [1]))
    assert legendre_deriv(n, x) == pytest.approx(ref, rel=1e-10, abs=1e-10)


def test_nearest_zero():
    z, gap = legendre_zeros(3).nearest_zero(0.7)
    assert z == pytest.approx(math.sqrt(0.6)) and gap == pytest.approx(math.sqrt(0.6) - 0.7)
