"""Exhaustive reference solver for desk-sized instances.

Every subcarrier assignment is enumerated and, for each one, the remaining
power problem (convex: a sum of powers under concave rate constraints) is
solved with SLSQP. Rates here solve the fixed-point equation of
:mod:`lanealloc.rate` by a bracketed root search, never through the solver's
closed form, so the two paths stay independent.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize

from .channel import build_channel_tensor
from .rate import LOG2E, deterministic_rate_array, fixed_point_rhs
from .scenario import BaseStation, CarrierPlan, Lane, Scenario, TimeGrid, User


@dataclass
class OracleResult:
    avg_power: float          # inf when no assignment is feasible
    assignment: np.ndarray    # (M, J, N) user index or -1
    power: np.ndarray         # (M, J, N)
    feasible_count: int       # assignments with a feasible power allocation


def _fixed_point_root(snr, L):
    """Root of ``u - rhs(u)``, bracketed by ``[1, 1 + snr/L]``, per link."""
    u = np.ones_like(snr)
    for i in np.flatnonzero(snr > 0):
        x, l = float(snr[i]), float(L[i])
        u[i] = brentq(lambda v: v - fixed_point_rhs(v, x, l), 1.0, 1.0 + x / l,
                      xtol=1e-300, rtol=1e-15, maxiter=200)
    return u


class _Rates:
    """Rate (nats/s/Hz) and its SNR derivative, remembering the last
    evaluation."""

    def __init__(self, L):
        self.L = L
        self.last = (None, None)

    def __call__(self, snr):
        if self.last[0] is not None and np.array_equal(self.last[0], snr):
            return self.last[1]
        L = self.L
        u = _fixed_point_root(snr, L)
        out = (np.log1p(snr / u) + L * (np.log(u) - 1.0 + 1.0 / u), 1.0 / (u + snr))
        self.last = (snr.copy(), out)
        return out


def min_power(c, L, block, owner, demand, pmax, bsdt):
    """Minimum total power for one fixed assignment.

    ``c`` holds the normalised gains of the assigned links, ``owner`` their
    users, ``block`` their (slot, BS) block and ``pmax`` the cap of each
    block. Returns ``(total_power, powers)`` or ``(inf, None)``.
    """
    K = demand.size
    need = np.flatnonzero(demand > 0)
    if any(not np.any(owner == k) for k in need):
        return np.inf, None
    if need.size == 0:
        return 0.0, np.zeros(c.size)
    scale = pmax[block]
    bits = bsdt * LOG2E
    rates = _Rates(L)

    def delivered(y):
        r, dr = rates(c * y * scale)
        return np.bincount(owner, weights=r, minlength=K) * bits, dr

    def cons_rate(y):
        d, _ = delivered(y)
        return d[need] / demand[need] - 1.0

    def cons_rate_jac(y):
        _, dr = delivered(y)
        jac = np.zeros((need.size, y.size))
        for i, k in enumerate(need):
            on = owner == k
            jac[i, on] = bits * dr[on] * c[on] * scale[on] / demand[k]
        return jac

    nb = int(block.max()) + 1
    caps = pmax[:nb]

    def cons_cap(y):
        return 1.0 - np.bincount(block, weights=y * scale, minlength=nb) / caps

    def cons_cap_jac(y):
        jac = np.zeros((nb, y.size))
        jac[block, np.arange(y.size)] = -scale / caps[block]
        return jac

    # start from one common level per user that meets its demand; a user
    # short even with every link at its block's cap rules the assignment out
    y0 = np.zeros(c.size)
    for k in need:
        on = owner == k
        lo, hi = 1e-12, 1.0
        if delivered(np.where(on, hi, 0.0))[0][k] < demand[k]:
            return np.inf, None
        for _ in range(30):
            mid = np.sqrt(lo * hi)
            if delivered(np.where(on, mid, 0.0))[0][k] >= demand[k]:
                hi = mid
            else:
                lo = mid
        y0[on] = hi
    total = float(np.sum(scale))
    res = minimize(lambda y: float(np.dot(y, scale)) / total, y0,
                   jac=lambda y: scale / total, method="SLSQP",
                   bounds=[(0.0, 1.0)] * c.size,
                   constraints=[{"type": "ineq", "fun": cons_rate, "jac": cons_rate_jac},
                                {"type": "ineq", "fun": cons_cap, "jac": cons_cap_jac}],
                   options={"ftol": 1e-14, "maxiter": 500})
    y = np.clip(res.x, 0.0, 1.0)
    d, _ = delivered(y)
    ok = np.all(d[need] >= demand[need] * (1.0 - 1e-7)) and np.all(cons_cap(y) >= -1e-7)
    if not ok:
        return np.inf, None
    return float(np.dot(y, scale)), y * scale


def brute_force(gains, noise, antennas, max_powers, demands, bsdt) -> OracleResult:
    """Best assignment and power for gains of shape ``(K, M, J, N)``.

    Only complete assignments are enumerated (``K ** (M J N)`` of them): an
    idle link handed to any user can carry zero power, so it never shrinks
    the feasible set. Keep the instance tiny.
    """
    K, M, J, N = gains.shape
    links = [(m, j, n) for m in range(M) for j in range(J) for n in range(N)]
    if K ** len(links) > 100_000:
        raise ValueError("instance too large to enumerate")
    demands = np.asarray(demands, dtype=float)
    antennas = np.asarray(antennas, dtype=float)
    idle = np.full((M, J, N), -1)
    if np.all(demands <= 0):
        return OracleResult(0.0, idle, np.zeros((M, J, N)), 1)
    mm, jj, nn = (np.array(v) for v in zip(*links))
    block = mm * J + jj
    pmax = np.repeat(np.asarray(max_powers, dtype=float)[None, :], M, axis=0).ravel()
    best = OracleResult(np.inf, idle, np.zeros((M, J, N)), 0)
    best_total = np.inf
    count = 0
    for choice in itertools.product(range(K), repeat=len(links)):
        kk = np.array(choice)
        c = gains[kk, mm, jj, nn] / noise
        total, p = min_power(c, antennas[jj], block, kk, demands, pmax, bsdt)
        if not np.isfinite(total):
            continue
        count += 1
        if total < best_total:
            best_total = total
            assign = np.full((M, J, N), -1)
            assign[mm, jj, nn] = np.where(p > 0, kk, -1)
            power = np.zeros((M, J, N))
            power[mm, jj, nn] = p
            best = OracleResult(total / (K * M), assign, power, count)
    best.feasible_count = count
    return best


def brute_force_scenario(scenario: Scenario, gains) -> OracleResult:
    return brute_force(gains, scenario.noise.per_subcarrier_power, scenario.antenna_counts,
                       scenario.max_powers, scenario.demands,
                       scenario.plan.subcarrier_bandwidth * scenario.grid.slot_length)


def random_small_scenario(rng: np.random.Generator, K: int = 2, M: int = 2, J: int = 1,
                          N: int = 2, load: tuple[float, float] = (0.05, 0.5)) -> Scenario:
    """A tiny random world whose demands are a fraction ``load`` of what
    each user could get alone on every link at the cap split evenly."""
    dt, bs = 10.0, 2e6
    L = int(rng.choice([1, 4, 16]))
    stations = tuple(BaseStation(j, (float(j) * 30e3, 0.0), 100.0, L, 40.0) for j in range(J))
    users = []
    for k in range(K):
        start = np.array([rng.uniform(-10e3, 10e3 + 30e3 * (J - 1)), rng.uniform(2e3, 40e3)])
        heading = rng.uniform(0.0, 2.0 * np.pi)
        end = start + rng.uniform(5.0, 15.0) * M * dt * np.array([np.cos(heading), np.sin(heading)])
        lane = Lane((0.0, M * dt), (tuple(map(float, start)), tuple(map(float, end))))
        users.append(User(k, lane, 10.0, 1.0))
    scenario = Scenario(stations, tuple(users), CarrierPlan(1.9e9, bs * N, N), TimeGrid(M, dt),
                        -174.0)
    gains = build_channel_tensor(scenario).gains
    snr = gains * 40.0 / N / scenario.noise.per_subcarrier_power
    solo = (deterministic_rate_array(snr, L) * bs * dt).sum(axis=(1, 2, 3))
    return scenario.with_demands(solo * rng.uniform(*load, size=K))
