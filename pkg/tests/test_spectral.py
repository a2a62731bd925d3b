"""Discrete spectral measure: atoms, cumulative, transform round trips, and
the heat kernel."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slhyper.spectral import (GridFunction, bump_function, forward_transform,
                              heat_kernel, heat_kernel_grid, inverse_transform)


def test_grid_function_rejects_bad_grid():
    with pytest.raises(ValueError):
        GridFunction(np.array([0.0, 1.0, 1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        GridFunction(np.array([0.0, 2.0, 1.0]), np.zeros(3))


def test_grid_function_interp_zero_outside():
    h = GridFunction(np.array([1.0, 2.0, 3.0]), np.array([2.0, 4.0, 6.0]))
    assert h(2.5) == pytest.approx(5.0)
    assert h(0.5) == 0.0
    assert h(10.0) == 0.0


def test_trapezoid_weights_sum_to_length():
    g = np.linspace(0.0, 7.0, 23)
    h = GridFunction(g, np.zeros_like(g))
    assert h.trapezoid_weights().sum() == pytest.approx(7.0)


def test_bump_flags_and_support():
    g = np.linspace(0.0, 10.0, 401)
    h = bump_function(4.0, 1.5, g)
    assert h.compact_support and h.smooth2
    assert np.all(h.values >= 0.0)
    assert h(4.0) > 0.0
    assert h(4.0 + 1.6) == 0.0 and h(4.0 - 1.6) == 0.0


def test_atoms_sorted_positive(sm_cosine):
    assert np.all(np.diff(sm_cosine.lambdas) > 0)
    assert np.all(sm_cosine.masses > 0)
    assert sm_cosine.lambdas[0] >= sm_cosine.sigma2 - 0.05


def test_cumulative_monotone(sm_cosine):
    lams = np.linspace(0.0, 100.0, 300)
    vals = np.array([sm_cosine.cumulative(l) for l in lams])
    assert np.all(np.diff(vals) >= -1e-14)
    total = float(np.sum(sm_cosine.masses))
    assert sm_cosine.cumulative(sm_cosine.lambdas[-1] + 10.0) == pytest.approx(total)


def test_cosine_cumulative_oracle(sm_cosine):
    # for the flat operator on [0, inf) the density is 1/(pi sqrt(lam)),
    # so rho[0, lam] = 2 sqrt(lam) / pi
    for lam in (4.0, 25.0, 100.0):
        want = 2.0 * np.sqrt(lam) / np.pi
        assert sm_cosine.cumulative(lam) == pytest.approx(want, rel=2e-2)


def test_transform_round_trip(sm_cosine):
    g = np.linspace(0.0, 12.0, 1201)
    h = bump_function(5.0, 2.0, g)
    tbl = forward_transform(h, sm_cosine)
    back = inverse_transform(tbl, sm_cosine, g)
    err = np.max(np.abs(back.values - h.values)) / np.max(np.abs(h.values))
    assert err < 5e-3


def test_transform_linearity(sm_cosine):
    g = np.linspace(0.0, 12.0, 801)
    h1 = bump_function(4.0, 1.5, g)
    h2 = bump_function(7.0, 2.0, g)
    both = GridFunction(g, 2.0 * h1.values + h2.values,
                        compact_support=True, smooth2=True)
    f1 = forward_transform(h1, sm_cosine).values
    f2 = forward_transform(h2, sm_cosine).values
    fb = forward_transform(both, sm_cosine).values
    assert np.allclose(fb, 2.0 * f1 + f2, atol=1e-12)


def test_heat_kernel_requires_positive_time(sm_cosine):
    with pytest.raises(ValueError):
        heat_kernel(0.0, 1.0, 1.0, sm_cosine)
    with pytest.raises(ValueError):
        heat_kernel(-0.5, 1.0, 1.0, sm_cosine)


def test_heat_kernel_symmetry_and_mass(sm_cosine):
    t = 0.3
    assert heat_kernel(t, 1.0, 2.0, sm_cosine) == pytest.approx(
        heat_kernel(t, 2.0, 1.0, sm_cosine), rel=1e-10)
    # q_t(x, .) r integrates to ~1 well inside the truncated interval
    ys = np.linspace(0.0, 14.0, 1401)
    q = heat_kernel_grid(t, 2.0, ys, sm_cosine)
    r = sm_cosine.spec.r(ys)
    assert np.trapezoid(q * r, ys) == pytest.approx(1.0, abs=5e-3)


def test_heat_kernel_gaussian_oracle(sm_cosine):
    # flat case: q_t(x,y) = sum of image Gaussians; one term dominates
    t, x, y = 0.2, 1.0, 1.5
    got = heat_kernel(t, x, y, sm_cosine)
    want = 0.0
    for s in (-1.0, 1.0):
        want += np.exp(-(x - s * y) ** 2 / (4 * t)) / np.sqrt(4 * np.pi * t)
    assert got == pytest.approx(want, rel=1e-4)


@settings(max_examples=25, deadline=None)
@given(c=st.floats(2.0, 8.0), wd=st.floats(0.5, 2.0))
def test_transform_bounded_by_l1_mass(c, wd, sm_wide_cached):
    sm = sm_wide_cached
    g = np.linspace(0.0, 12.0, 601)
    h = bump_function(c, wd, g)
    mass = np.trapezoid(np.abs(h.values) * sm.spec.r(g), g)
    vals = forward_transform(h, sm).values
    assert np.max(np.abs(vals)) <= mass * (1 + 1e-9)


@pytest.fixture(scope="module")
def sm_wide_cached(sm_cosine_wide):
    return sm_cosine_wide
