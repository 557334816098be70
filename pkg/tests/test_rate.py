import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from lanealloc.rate import (LOG2E, FixedPointError, LinkParams, deterministic_rate,
                            deterministic_rate_array, f_metric, fixed_point_array,
                            fixed_point_rhs, g_metric, monte_carlo_rate, solve_fixed_point)
from lanealloc.verify import l1_exact_rate

# L = 1, x = 2: u* = 2 and r = 1 + 1 - log2(e)/2 bits/s/Hz
R_L1_X2 = 2.0 - LOG2E / 2.0


def link(x, L, B=1.0):
    return LinkParams(float(x), 1.0, 1.0, int(L), B)


def test_zero_power_short_circuits():
    fp = solve_fixed_point(link(0.0, 16))
    assert fp.u_star == 1.0 and fp.residual == 0.0
    assert deterministic_rate(link(0.0, 16)) == 0.0


def test_quadratic_root():
    assert solve_fixed_point(link(2.0, 1)).u_star == pytest.approx(2.0, abs=1e-12)
    assert deterministic_rate(link(2.0, 1)) == pytest.approx(R_L1_X2, rel=1e-12)
    assert R_L1_X2 == pytest.approx(1.2787, abs=1e-4)


def test_root_approaches_one_as_antennas_grow():
    us = [solve_fixed_point(link(5.0, L)).u_star for L in (1, 4, 16, 64, 256)]
    assert all(b < a for a, b in zip(us, us[1:]))
    assert us[-1] - 1.0 < 0.02


def test_bad_inputs():
    with pytest.raises(ValueError):
        LinkParams(-1.0, 1.0, 1.0, 1)
    with pytest.raises(ValueError):
        LinkParams(1.0, 1.0, 0.0, 1)
    with pytest.raises(ValueError):
        solve_fixed_point(link(1.0, 1), tol=0.0)
    with pytest.raises(FixedPointError) as info:
        solve_fixed_point(link(1e3, 1), max_iter=3)
    assert info.value.residual > 0
    with pytest.raises(ValueError):
        g_metric(1.0, -0.1, 1.0, 1.0, 1)
    with pytest.raises(ValueError):
        f_metric(1.0, 0.5, 1.0, 1.0, 1)


def test_exact_rayleigh_oracle():
    assert l1_exact_rate(2.0) == pytest.approx(1.332, abs=1e-3)
    mc = monte_carlo_rate(link(2.0, 1), 1_000_000, np.random.default_rng(3))
    assert abs(mc.rate - l1_exact_rate(2.0)) < 0.01
    assert abs(mc.rate - l1_exact_rate(2.0)) < 3 * mc.stderr


def test_monte_carlo_zero_power_and_determinism():
    assert monte_carlo_rate(link(0.0, 16), 10, np.random.default_rng(0)) == (0.0, 0.0)
    a = monte_carlo_rate(link(3.0, 4), 5000, np.random.default_rng(5))
    b = monte_carlo_rate(link(3.0, 4), 5000, np.random.default_rng(5))
    assert a == b
    with pytest.raises(ValueError):
        monte_carlo_rate(link(3.0, 4), 0, np.random.default_rng(5))


def test_de_close_to_monte_carlo_at_16_antennas():
    de = deterministic_rate(link(10.0, 16))
    mc = monte_carlo_rate(link(10.0, 16), 100_000, np.random.default_rng(0))
    assert abs(de - mc.rate) / mc.rate < 0.03


def test_metric_special_cases():
    assert g_metric(3.0, 0.0, 2.0, 1.0, 16) == pytest.approx(math.log2(7.0))
    assert g_metric(0.0, 0.0, 2.0, 1.0, 16) == 0.0
    assert f_metric(3.0, 1.0, 2.0, 1.0, 16) == pytest.approx(math.log2(7.0))


def test_fixed_point_array_matches_scalar():
    rng = np.random.default_rng(2)
    x = 10.0 ** rng.uniform(-3, 3, size=(4, 5))
    L = rng.choice([1, 4, 16, 64], size=(4, 5))
    u = fixed_point_array(x, L)
    ref = np.vectorize(lambda a, b: solve_fixed_point(link(a, b)).u_star)(x, L)
    np.testing.assert_allclose(u, ref, rtol=1e-11)
    np.testing.assert_allclose(u, fixed_point_array(x, L, u0=3.0), rtol=1e-11)
    r = deterministic_rate_array(x, L)
    np.testing.assert_allclose(r, np.vectorize(lambda a, b: deterministic_rate(link(a, b)))(x, L),
                               rtol=1e-11)


snr = st.floats(1e-3, 1e3)
ants = st.sampled_from([1, 2, 4, 16, 64])


@settings(max_examples=100, deadline=None)
@given(snr, ants, st.sampled_from([1.0, 2.0, 10.0]))
def test_root_is_unique_from_any_start(x, L, u0):
    a = solve_fixed_point(link(x, L)).u_star
    b = solve_fixed_point(link(x, L), u0=u0).u_star
    assert a >= 1.0
    assert abs(a - b) <= 1e-9
    assert abs(a - fixed_point_rhs(a, x, L)) <= 1e-10


@settings(max_examples=100, deadline=None)
@given(snr, ants, st.floats(0.0, 8.0))
def test_substitution_identity(x, L, w):
    assert f_metric(x, math.exp(w), 1.0, 1.0, L) == pytest.approx(g_metric(x, w, 1.0, 1.0, L),
                                                                  rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(snr, ants)
def test_stationary_point_is_the_root(x, L):
    u = solve_fixed_point(link(x, L)).u_star
    opt = minimize_scalar(lambda v: f_metric(x, v, 1.0, 1.0, L), bounds=(1.0, 1.0 + x / L + 1.0),
                          method="bounded", options={"xatol": 1e-12})
    # f is flat at its minimum, so compare values and locate the root by its
    # derivative sign instead of the optimiser's argument
    assert f_metric(x, u, 1.0, 1.0, L) <= opt.fun + 1e-12
    h = 1e-6 * u
    assert f_metric(x, u - h, 1.0, 1.0, L) >= f_metric(x, u, 1.0, 1.0, L) - 1e-15
    assert f_metric(x, u + h, 1.0, 1.0, L) >= f_metric(x, u, 1.0, 1.0, L) - 1e-15


@settings(max_examples=60, deadline=None)
@given(snr, ants)
def test_tight_metric_equals_rate(x, L):
    u = solve_fixed_point(link(x, L)).u_star
    assert g_metric(x, math.log(u), 1.0, 1.0, L) == pytest.approx(deterministic_rate(link(x, L)),
                                                                 abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(snr, snr, ants, st.floats(0.0, 5.0))
def test_concave_in_power_at_fixed_omega(p1, p2, L, w):
    mid = g_metric(0.5 * (p1 + p2), w, 1.0, 1.0, L)
    avg = 0.5 * (g_metric(p1, w, 1.0, 1.0, L) + g_metric(p2, w, 1.0, 1.0, L))
    assert mid >= avg - 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 1e3), ants)
def test_rate_increases_with_power(x, L):
    assert deterministic_rate(link(x * 1.01, L)) > deterministic_rate(link(x, L))
