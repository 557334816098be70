import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lanealloc.rate import LOG2E, LinkParams, deterministic_rate, g_metric
from lanealloc.solver import (SolverConfig, assign_subcarriers, assignment_metric, power_update,
                              update_gamma, update_nu, update_omega)


def test_power_update_examples():
    assert power_update(1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1, 1) == pytest.approx(LOG2E - 1.0)
    assert LOG2E - 1.0 == pytest.approx(0.4427, abs=1e-4)
    assert power_update(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1, 1) == 0.0
    assert power_update(1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1, 1) == 0.0
    assert power_update(1.0, 0.0, 0.0, 1e-30, 1.0, 1.0, 1.0, 1, 1) == 0.0


def test_assignment_metric_examples():
    assert assignment_metric(0.0, 0.0, 3.0, 0.1, 1.0, 1.0, 1.0, 1.0, 2, 2, 16) == 0.0
    P = power_update(0.0, 0.1, 0.0, 1.0, 1.0, 1.0, 1.0, 2, 2)
    assert assignment_metric(P, 0.0, 0.0, 0.1, 1.0, 1.0, 1.0, 1.0, 2, 2, 16) == 0.0
    # a strong link under a large QoS price is worth taking
    nu = 50.0
    w = update_omega(1.0, 4.0, 1.0, 16)
    P = power_update(nu, 0.0, w, 4.0, 1.0, 1.0, 1.0, 1, 1)
    assert assignment_metric(P, update_omega(P, 4.0, 1.0, 16), nu, 0.0, 4.0, 1.0,
                             1.0, 1.0, 1, 1, 16) < 0


def test_assign_subcarriers_examples():
    assert assign_subcarriers([-2.0, -5.0, 1.0]) == 1
    assert assign_subcarriers([0.0, 0.0, 0.0]) is None
    assert assign_subcarriers([-3.0, -3.0]) == 0
    assert assign_subcarriers([]) is None


def test_update_gamma_examples():
    assert update_gamma(0.3, 0.01, 40.0, 40.0) == 0.3
    assert update_gamma(0.1, 0.01, 40.0, 50.0) == pytest.approx(0.2)
    assert update_gamma(0.0, 0.01, 40.0, 12.0) == 0.0


def test_update_nu_examples():
    assert update_nu(0.7, 1e-9, 1e9, 1e9) == 0.7
    assert update_nu(1.0, 1e-9, 1e9, 0.0) == pytest.approx(2.0)
    assert update_nu(0.0, 1e-9, 1e9, 2e9) == 0.0


def test_update_omega_examples():
    assert update_omega(0.0, 1.0, 1.0, 1) == 0.0
    assert update_omega(2.0, 1.0, 1.0, 1) == pytest.approx(math.log(2.0), abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.floats(1e-3, 1e3), st.sampled_from([1, 4, 16, 64]))
def test_pinned_omega_makes_metric_tight(x, L):
    w = update_omega(x, 1.0, 1.0, L)
    assert w >= 0.0
    assert g_metric(x, w, 1.0, 1.0, L) == pytest.approx(
        deterministic_rate(LinkParams(x, 1.0, 1.0, L)), abs=1e-9)


@settings(max_examples=80, deadline=None)
@given(st.floats(0.0, 10.0), st.floats(1e-6, 1.0), st.floats(0.0, 100.0), st.floats(0.0, 100.0))
def test_multiplier_updates_stay_nonnegative(m0, step, a, b):
    assert update_gamma(m0, step, a, b) >= 0.0
    assert update_nu(m0, step, a, b) >= 0.0


@pytest.mark.parametrize("kw", [
    {"max_iterations": 0}, {"step_decay": 0.0}, {"step_decay": 1.5}, {"step_nu_0": 1.0},
    {"convergence_tol": 0.0}, {"step_rule": "armijo"}, {"gap_tol": -1.0},
    {"polyak_patience": 0}, {"local_search_budget": -1},
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)
