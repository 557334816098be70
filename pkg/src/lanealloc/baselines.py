"""Comparison schemes: a slot-by-slot scheme with instantaneous channels and
an equal-power scheme.

Both reuse the solver's problem plumbing so that every scheme is scored on
the same objective and the same constraint checks.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from .channel import ChannelTensor, sample_small_scale
from .rate import LOG2E
from .scenario import Scenario
from .solver import (AllocationResult, SolverConfig, _bisect_log, _fixed_allocation, _Problem,
                     _rate_at_power, _recover, _solve, _to_result, greedy_assignment)


class BaselineKind(enum.Enum):
    myopic_full_csit = "myopic"
    equal_power = "equal_power"


def instantaneous_gains(channel: ChannelTensor, scenario: Scenario,
                        rng: np.random.Generator) -> np.ndarray:
    """Large-scale gains times a fresh ``X / L`` draw per link, ``X ~ Gamma(L, 1)``.

    The ``1/L`` keeps the mean of every effective gain equal to its
    large-scale value.
    """
    g = channel.gains
    out = np.empty_like(g)
    L = scenario.antenna_counts
    for j in range(g.shape[2]):
        X = sample_small_scale(int(L[j]), rng, g[:, :, j, :].shape)
        out[:, :, j, :] = g[:, :, j, :] * X / L[j]
    return out


def slot_schedule(demands: np.ndarray, slots: int, links_per_slot: int) -> np.ndarray:
    """Round-robin slot membership, shape ``(K, M)``.

    With more active users than links in a slot, a per-slot demand cannot be
    met by everyone at once, so users are split into
    ``ceil(active / links_per_slot)`` groups served in turn.
    """
    K = demands.size
    active = np.flatnonzero(demands > 0)
    groups = max(1, min(math.ceil(active.size / max(links_per_slot, 1)), slots))
    member = np.zeros((K, slots), dtype=bool)
    turn = np.arange(slots) % groups
    for rank, k in enumerate(active):
        member[k] = turn == rank % groups
    return member


def run_myopic(channel: ChannelTensor, scenario: Scenario, config: SolverConfig | None = None,
               rng: np.random.Generator | None = None) -> AllocationResult:
    """Slot-by-slot allocation with instantaneous full channel knowledge.

    Each slot is its own problem: a user's demand is spread evenly over the
    slots it is scheduled in, and gains are the realised instantaneous
    values. The slot problems share no multipliers, so they are solved as
    one problem with one demand window per slot. ``deficits`` of the result
    is indexed ``(user, slot)``.
    """
    config = config or SolverConfig()
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    K, M, J, N = channel.shape
    gains = instantaneous_gains(channel, scenario, rng)
    member = slot_schedule(scenario.demands, M, J * N)
    counts = member.sum(axis=1)
    per_slot = np.divide(scenario.demands, counts, out=np.zeros(K), where=counts > 0)
    demand = np.where(member, per_slot[:, None], 0.0)
    # a user with demand but no slot keeps it all in slot 0, which flags it
    unslotted = (scenario.demands > 0) & (counts == 0)
    demand[unslotted, 0] = scenario.demands[unslotted]
    prob = _Problem.build(scenario, gains, demand=demand, window=np.arange(M), known_gain=True)
    if not np.any(demand > 0):
        return _to_result(prob, _recover(prob, np.full(prob.shape[:3], -1)),
                          np.zeros_like(demand), np.zeros((M, J)), 0, [])
    return _to_result(prob, *_solve(prob, config))


def run_equal_power(channel: ChannelTensor, scenario: Scenario,
                    config: SolverConfig | None = None) -> AllocationResult:
    """One common power level on every assigned subcarrier.

    Subcarriers are assigned by the solver's initial greedy rule; the level
    is the smallest one at which every user's demand is met, found by
    bisection. If that level breaks a per-BS cap, the largest admissible
    level is used instead and the result is flagged infeasible.
    """
    prob = _Problem.build(scenario, channel.gains)
    M, J, N, K = prob.shape
    assign = greedy_assignment(prob)
    on = assign >= 0
    mm, jj, nn = np.nonzero(on)
    kk = assign[on]
    cl = prob.c[mm, jj, nn, kk]
    Ll = prob.L[jj].astype(float)
    C = prob.demand[:, 0]
    users = np.flatnonzero((C > 0) & (np.bincount(kk, minlength=K) > 0))

    def bits(p):
        r = _rate_at_power(cl * p[kk], Ll)
        return np.bincount(kk, weights=r * prob.bsdt * LOG2E, minlength=K)[users]

    level = 0.0
    if users.size:
        lo = np.full(K, 1e-30)
        hi = np.ones(K)
        # 16**25 W is far past any cap; the clamp below takes over from there
        for _ in range(25):
            short = bits(hi) < C[users]
            if not short.any():
                break
            hi[users[short]] *= 16.0

        def f(p_users):
            p = np.ones(K)
            p[users] = p_users
            return bits(p)
        level = float(_bisect_log(f, C[users], lo[users], hi[users]).max())
    held = on.sum(axis=2)
    with np.errstate(divide="ignore"):
        cap = float(np.min(np.where(held > 0, prob.pmax[None, :] / held, np.inf)))
    level = min(level, cap)
    power = np.where(on, level, 0.0)
    best = _fixed_allocation(prob, assign, power)
    return _to_result(prob, best, np.zeros_like(prob.demand), np.zeros((M, J)), 64, [level])


def run_baseline(kind: BaselineKind, channel: ChannelTensor, scenario: Scenario,
                 config: SolverConfig | None = None,
                 rng: np.random.Generator | None = None) -> AllocationResult:
    if kind is BaselineKind.myopic_full_csit:
        return run_myopic(channel, scenario, config, rng)
    return run_equal_power(channel, scenario, config)
