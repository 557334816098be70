"""Compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times one dual sweep at full scale (K=90, M=250, J=3, N=15) and a
batch of link responses, checks that both backends agree, and prints the
speedup. Without the compiled extension only the fallback is timed.
"""

import argparse
import time

import numpy as np

from lanealloc import _kernels_py
from lanealloc.channel import build_channel_tensor
from lanealloc.generate import generate_paper_scenario

try:
    from lanealloc import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def best_of(fn, repeat):
    out, best = None, np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def sweep_inputs(seed=0):
    scenario = generate_paper_scenario(seed)
    gains = build_channel_tensor(scenario).gains
    c = np.ascontiguousarray(np.transpose(gains, (1, 2, 3, 0))) / scenario.noise.per_subcarrier_power
    M, J, N, K = c.shape
    rng = np.random.default_rng(seed)
    V = np.median(1.0 / c[c > 0]) * rng.uniform(0.5, 50.0, size=(K, 1))
    G = rng.uniform(0.0, 0.5, size=(M, J))
    return c, V, np.zeros(M, dtype=np.int64), G, scenario.antenna_counts


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    args_sweep = sweep_inputs()
    rng = np.random.default_rng(1)
    W = 10.0 ** rng.uniform(-1.0, 4.0, size=1_000_000)
    L = rng.choice([1.0, 4.0, 16.0, 64.0], size=W.size)

    cases = [("dual_sweep K=90 M=250 J=3 N=15", "dual_sweep", args_sweep),
             ("link_response 1e6 links", "link_response", (W, L))]
    print(f"{'kernel':34s} {'numpy [ms]':>11s} {'cython [ms]':>12s} {'speedup':>8s} {'max diff':>10s}")
    for label, name, a in cases:
        t_py, out_py = best_of(lambda: getattr(_kernels_py, name)(*a), args.repeat)
        if _kernels_c is None:
            print(f"{label:34s} {1e3 * t_py:11.2f} {'-':>12s} {'-':>8s} {'-':>10s}")
            continue
        t_c, out_c = best_of(lambda: getattr(_kernels_c, name)(*a), args.repeat)
        diff = 0.0
        for p, q in zip(out_py, out_c):
            p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
            diff = max(diff, float(np.max(np.abs(p - q) / np.maximum(1.0, np.abs(p)), initial=0.0)))
        print(f"{label:34s} {1e3 * t_py:11.2f} {1e3 * t_c:12.2f} {t_py / t_c:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
