import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lanealloc import _kernels_py, kernels
from lanealloc.rate import fixed_point_rhs

compiled = pytest.importorskip("lanealloc._kernels")


def random_sweep(rng, M=3, J=2, N=4, K=5, windows=1):
    c = 10.0 ** rng.uniform(-2, 3, size=(M, J, N, K))
    c[rng.random(c.shape) < 0.1] = 0.0
    V = 10.0 ** rng.uniform(-2, 1, size=(K, windows))
    V[rng.random(V.shape) < 0.2] = 0.0
    window = rng.integers(0, windows, size=M)
    G = rng.uniform(0, 2, size=(M, J))
    L = rng.choice([0, 1, 4, 16], size=J)
    return c, V, window, G, L


@pytest.mark.parametrize("seed", range(6))
def test_dual_sweep_backends_agree(seed):
    args = random_sweep(np.random.default_rng(seed), windows=1 + seed % 3)
    out_py = _kernels_py.dual_sweep(*args)
    out_c = compiled.dual_sweep(*args)
    np.testing.assert_array_equal(out_py[0], out_c[0])
    for a, b in zip(out_py[1:], out_c[1:]):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-300)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 1e5), min_size=1, max_size=30), st.sampled_from([0, 1, 2, 16, 64]))
def test_link_response_backends_agree(W, L):
    W = np.array(W)
    for a, b in zip(_kernels_py.link_response(W, L), compiled.link_response(W, L)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-300)


@settings(max_examples=80, deadline=None)
@given(st.floats(1.0 + 1e-6, 1e6), st.sampled_from([1, 4, 16, 64]))
def test_link_response_is_self_consistent(W, L):
    x, e, g = _kernels_py.link_response(np.array([W]), L)
    u = 1.0 + e[0]
    # water level splits into SNR plus the fixed point at that SNR
    assert x[0] + u == pytest.approx(W, rel=1e-12)
    assert u == pytest.approx(fixed_point_rhs(u, x[0], L), rel=1e-11)


def test_dispatch_prefers_compiled_and_honours_override():
    assert kernels.BACKEND == "cython"
    env = dict(os.environ, LANEALLOC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from lanealloc import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
