"""Long-term joint subcarrier/power allocation by Lagrangian dual
decomposition.

The iteration follows the classic loop: for every slot ``m``, BS ``j`` and
subcarrier ``n`` each user gets its KKT water-filling power, the subcarrier
goes to the user with the most negative assignment metric, then the per-BS
power multipliers and the per-user QoS multipliers take projected
subgradient steps. Because a block ``(m, j)`` only reads its own ``gamma``
and the ``nu`` are updated after the full sweep, one iteration is evaluated
as a single kernel call (:func:`lanealloc.kernels.dual_sweep`).

Internally multipliers are kept in scaled form::

    V = nu * Bs * dT * log2(e) * K * M      (watts)
    G = gamma * K * M                       (dimensionless)

so that the water level of the power update is ``V / (1 + G)``.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .channel import ChannelTensor
from .rate import LOG2E, LinkParams, deterministic_rate_array, g_metric, solve_fixed_point
from .scenario import Scenario

DEMAND_SLACK = 1e-3
POWER_SLACK = 1e-6


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the dual iteration.

    ``step_rule`` picks the multiplier step: ``"polyak"`` (default) scales
    the subgradient by ``theta * (best_primal - dual) / |s|^2`` and halves
    ``theta`` after ``polyak_patience`` iterations without a better dual;
    ``"diminishing"`` uses ``step_*_0 / i**step_decay``. The loop stops when
    the power tensor changes by less than ``convergence_tol`` for
    ``convergence_window`` iterations, when the certified duality gap drops
    below ``gap_tol``, when ``theta`` decays below ``polyak_theta_min``, or
    at ``max_iterations``. The best recovered
    allocation then gets up to ``local_search_budget`` single-link moves.
    """
    max_iterations: int = 2000
    step_rule: str = "polyak"
    step_gamma_0: float = 0.5
    step_nu_0: float = 0.5
    step_decay: float = 0.51
    polyak_theta_0: float = 1.0
    polyak_patience: int = 20
    polyak_theta_min: float = 1e-4
    convergence_tol: float = 1e-4
    convergence_window: int = 5
    gap_tol: float = 1e-3
    fixed_point_tol: float = 1e-12
    recover_every: int = 25
    local_search_budget: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.step_rule not in ("polyak", "diminishing"):
            raise ValueError("step_rule must be 'polyak' or 'diminishing'")
        for name in ("step_gamma_0", "step_nu_0", "polyak_theta_0", "polyak_theta_min",
                     "convergence_tol",
                     "fixed_point_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.step_decay <= 1:
            raise ValueError("step_decay must lie in (0, 1]")
        if self.step_nu_0 >= 1:
            # a relative step of 1 could drive a multiplier to exactly zero
            raise ValueError("step_nu_0 must be < 1")
        if self.gap_tol < 0:
            raise ValueError("gap_tol must be >= 0")
        if self.local_search_budget < 0:
            raise ValueError("local_search_budget must be >= 0")
        for name in ("polyak_patience", "convergence_window", "recover_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class AllocationTensor:
    power: np.ndarray        # (K, M, J, N) watts
    assignment: np.ndarray   # (K, M, J, N) bool

    def check(self, atol: float = 0.0) -> list[str]:
        """Violations of nonnegativity, one-user-per-subcarrier, power-only-if-assigned."""
        out = []
        if np.any(self.power < 0):
            out.append("negative power")
        if np.any(self.assignment.sum(axis=0) > 1):
            out.append("subcarrier shared by more than one user")
        if np.any((self.power > atol) & ~self.assignment):
            out.append("power on unassigned subcarrier")
        return out


@dataclass
class DualState:
    gamma: np.ndarray        # (M, J)
    nu: np.ndarray           # (K,) or (K, windows)
    omega: np.ndarray        # (K, M, J, N)
    iteration: int


@dataclass
class AllocationResult:
    allocation: AllocationTensor
    avg_power: float
    delivered_bits: np.ndarray
    feasible: bool
    dual_state: DualState
    iterations_used: int
    convergence_trace: list[float] = field(default_factory=list)
    dual_bound: float = -math.inf           # best dual value seen, watts
    deficits: np.ndarray | None = None      # (K, windows) bits still missing
    block_power: np.ndarray | None = None   # (M, J)

    def deficit_table(self) -> list[tuple[int, int, float]]:
        """``(user, window, missing_bits)`` for every short demand."""
        if self.deficits is None:
            return []
        return [(int(k), int(w), float(self.deficits[k, w]))
                for k, w in zip(*np.nonzero(self.deficits > 0))]


# --- single-link operations in physical units ---------------------------------

def power_update(nu_k, gamma_mj, omega, beta, noise, Bs, dT, K, M):
    """Water-filling power ``[nu Bs dT log2(e) / (gamma + 1/KM) - e^w s2 / beta]^+``."""
    if beta <= 0:
        return 0.0
    level = nu_k * Bs * dT * LOG2E / (gamma_mj + 1.0 / (K * M))
    return max(level - math.exp(omega) * noise / beta, 0.0)


def assignment_metric(P, omega, nu_k, gamma_mj, beta, noise, Bs, dT, K, M, L):
    """``P / KM + gamma P - nu Bs dT g(P, omega)``; the theta term is gone."""
    g = g_metric(P, omega, beta, noise, L) if beta > 0 else 0.0
    return P / (K * M) + gamma_mj * P - nu_k * Bs * dT * g


def assign_subcarriers(U):
    """Index of the smallest metric if it is strictly negative, else None.
    Ties go to the lowest index."""
    U = np.asarray(U, dtype=float)
    if U.size == 0:
        return None
    k = int(np.argmin(U))
    return k if U[k] < 0 else None


def update_gamma(gamma, step, Pmax, used_power):
    """Projected subgradient step for the per-(slot, BS) power multiplier."""
    return np.maximum(gamma - step * (Pmax - used_power), 0.0)


def update_nu(nu, step, demand, delivered_bits):
    """Projected subgradient step for the per-user QoS multiplier."""
    return np.maximum(nu - step * (delivered_bits - demand), 0.0)


def update_omega(P, beta, noise, L, tol: float = 1e-12) -> float:
    """Pin ``omega = ln u*`` at power ``P``, where the surrogate is tight."""
    if P <= 0 or beta <= 0:
        return 0.0
    return math.log(solve_fixed_point(LinkParams(P, beta, noise, L), tol=tol).u_star)


# --- internal problem -------------------------------------------------------

@dataclass
class _Problem:
    c: np.ndarray          # (M, J, N, K) beta / sigma^2
    demand: np.ndarray     # (K, W) bits per user and demand window
    window: np.ndarray     # (M,) window of each slot
    L: np.ndarray          # (J,)
    pmax: np.ndarray       # (J,)
    bsdt: float            # bits per (nat/s/Hz) is bsdt * log2(e)
    KM: float
    noise: float

    @property
    def shape(self):
        return self.c.shape

    @property
    def n_windows(self):
        return self.demand.shape[1]

    @classmethod
    def build(cls, scenario: Scenario, gains: np.ndarray, demand=None, window=None,
              known_gain: bool = False) -> "_Problem":
        """``demand``/``window`` split the horizon into demand windows (one
        window over all slots by default); ``known_gain`` treats the gains
        as exact instantaneous values, rated by ``log(1 + SNR)``."""
        K, M, J, N = gains.shape
        if (K, M, J, N) != (scenario.K, scenario.M, scenario.J, scenario.N):
            raise ValueError(f"channel shape {gains.shape} does not match scenario "
                             f"{(scenario.K, scenario.M, scenario.J, scenario.N)}")
        noise = scenario.noise.per_subcarrier_power
        if demand is None:
            demand = scenario.demands[:, None]
            window = np.zeros(M, dtype=np.int64)
        return cls(c=np.ascontiguousarray(gains.transpose(1, 2, 3, 0) / noise),
                   demand=np.asarray(demand, dtype=float),
                   window=np.asarray(window, dtype=np.int64),
                   L=np.zeros(J, dtype=np.int64) if known_gain else scenario.antenna_counts,
                   pmax=scenario.max_powers,
                   bsdt=scenario.plan.subcarrier_bandwidth * scenario.grid.slot_length,
                   KM=float(K * M), noise=noise)


def _u_closed(x, L):
    """Positive root of the fixed-point quadratic at SNR ``x``."""
    b = L * x - L - x
    s = np.sqrt(b * b + 4.0 * L * L * x)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(b >= 0, 2.0 * L * x / (b + s), (s - b) / (2.0 * L))
    return np.where(x > 0, u, 1.0)


def _rate_at_power(x, L):
    """Deterministic-equivalent rate in nats/s/Hz at SNR ``x`` (closed form);
    ``L = 0`` means a known gain, rate ``ln(1 + x)``."""
    L = np.asarray(L, dtype=float)
    u = _u_closed(x, np.where(L > 0, L, 1.0))
    de = np.log1p(x / u) + L * (np.log(u) - 1.0 + 1.0 / u)
    return np.where(L > 0, de, np.log1p(x))


def _fill_by_need(prob: _Problem, keys, est: np.ndarray, assign: np.ndarray,
                  until_covered: bool) -> None:
    """Hand out free links in need order, in place.

    The user (per demand window) with the smallest fraction of its demand
    covered takes its free link ranked highest by ``keys`` (a tuple of
    arrays shaped like ``prob.c``, the first one most significant); ``est``
    is the bits a link is credited with. Stops when links run out or, with
    ``until_covered``, once every user is covered.
    """
    M, J, N, K = prob.shape
    for w in range(prob.n_windows):
        slots = np.flatnonzero(prob.window == w)
        users = np.flatnonzero(prob.demand[:, w] > 0)
        if slots.size == 0 or users.size == 0:
            continue
        kw = [-key[slots].reshape(-1, K)[:, users] for key in reversed(keys)]
        ew = est[slots].reshape(-1, K)
        order = np.lexsort(kw, axis=0).T
        taken = (assign[slots] >= 0).ravel()
        left = int((~taken).sum())
        ptr = np.zeros(users.size, dtype=np.int64)
        got = np.zeros(users.size)
        heap = [(0.0, i) for i in range(users.size)]
        while heap and left:
            cover, i = heapq.heappop(heap)
            if until_covered and cover >= 1.0:
                break
            row = order[i]
            p = ptr[i]
            while p < row.size and taken[row[p]]:
                p += 1
            if p == row.size:
                continue
            link = row[p]
            ptr[i] = p + 1
            taken[link] = True
            left -= 1
            k = users[i]
            s, rem = divmod(int(link), J * N)
            assign[slots[s], rem // N, rem % N] = k
            got[i] += ew[link, k]
            heapq.heappush(heap, (got[i] / prob.demand[k, w], i))


def _uniform_bits(prob: _Problem) -> np.ndarray:
    """Bits each link would carry at the uniform power ``Pmax / (2N)``."""
    p0 = prob.pmax / (2.0 * prob.shape[2])
    return prob.bsdt * LOG2E * _rate_at_power(prob.c * p0[None, :, None, None],
                                              prob.L[None, :, None, None].astype(float))


def greedy_assignment(prob: _Problem) -> np.ndarray:
    """Initial subcarrier allocation.

    Every link starts at the uniform power ``Pmax / (2N)``. The user (per
    demand window) with the smallest fraction of its demand covered takes
    its free link with the largest gain, until all links are taken.
    """
    assign = np.full(prob.shape[:3], -1, dtype=np.int64)
    _fill_by_need(prob, (prob.c,), _uniform_bits(prob), assign, until_covered=False)
    return assign


def _surplus(prob: _Problem, V: np.ndarray, G: np.ndarray):
    """Lagrangian surplus ``V g - (1 + G) P`` of every (link, user) at its
    own KKT power, and the rate ``g`` there; both shaped like ``prob.c``."""
    a = 1.0 + G[:, :, None, None]
    Vm = V[:, prob.window].T[:, None, None, :]
    W = prob.c * Vm / a
    x, _, g = kernels.link_response(W, np.broadcast_to(prob.L[None, :, None, None].astype(float),
                                                         W.shape))
    with np.errstate(divide="ignore", invalid="ignore"):
        P = np.where(x > 0, x / prob.c, 0.0)
    return np.where(x > 0, Vm * g - a * P, 0.0), g


def priced_assignment(prob: _Problem, V: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Round dual prices to a subcarrier allocation that respects demands.

    At the dual optimum many users tie on the same links, so the plain
    argmin of the metric over-serves some users and starves others. Here
    the user with the least covered demand picks first, preferring links
    where its surplus ``V g - (1 + G) P`` beats the best rival's by the
    widest margin. Links left once every user is covered go to the user
    with the largest surplus.
    """
    surplus, g = _surplus(prob, V, G)
    est = np.where(g > 0, prob.bsdt * LOG2E * g, _uniform_bits(prob))
    if surplus.shape[-1] > 1:
        top2 = np.partition(surplus, -2, axis=-1)[..., -2:]
        rival = np.where(surplus >= top2[..., 1:], top2[..., :1], top2[..., 1:])
    else:
        rival = np.zeros_like(surplus)
    priced = surplus > 0
    # priced links first, by margin; then the rest by gain
    keys = (priced.astype(float), np.where(priced, surplus - rival, 0.0), prob.c)
    assign = np.full(prob.shape[:3], -1, dtype=np.int64)
    _fill_by_need(prob, keys, est, assign, until_covered=True)
    best = np.argmax(surplus, axis=-1)
    top = np.take_along_axis(surplus, best[..., None], -1)[..., 0]
    return np.where((assign < 0) & (top > 0), best, assign)


@dataclass
class _Recovered:
    assign: np.ndarray     # (M, J, N)
    power: np.ndarray      # (M, J, N)
    e: np.ndarray          # (M, J, N), u* - 1
    delivered: np.ndarray  # (K, W)
    block_power: np.ndarray
    V: np.ndarray
    G: np.ndarray
    feasible: bool
    objective: float
    deficit: np.ndarray    # (K, W)


def _repair(prob: _Problem, assign: np.ndarray) -> np.ndarray:
    """Give every user-window with a demand but no link one link of its own."""
    M, J, N, K = prob.shape
    nw = prob.n_windows
    assign = assign.copy()
    held = np.zeros((K, nw), dtype=np.int64)
    on = assign >= 0
    np.add.at(held, (assign[on], np.broadcast_to(prob.window[:, None, None], assign.shape)[on]), 1)
    for k, w in zip(*np.nonzero((prob.demand > 0) & (held == 0))):
        slots = np.flatnonzero(prob.window == w)
        cand = assign[slots]
        owners = np.where(cand >= 0, cand, 0)
        free = cand < 0
        donor = (cand >= 0) & (held[owners, w] >= 2)
        ok = free | donor
        if not ok.any():
            continue
        score = np.where(ok, prob.c[slots, :, :, k], -np.inf)
        s, j, n = np.unravel_index(int(np.argmax(score)), score.shape)
        prev = assign[slots[s], j, n]
        if prev >= 0:
            held[prev, w] -= 1
        assign[slots[s], j, n] = k
        held[k, w] += 1
    return assign


def _bisect_log(f, target, lo, hi, iters=64):
    """Vectorised bisection in log space for increasing ``f``; returns the
    upper end so that ``f(result) >= target``."""
    llo, lhi = np.log(lo), np.log(hi)
    for _ in range(iters):
        mid = 0.5 * (llo + lhi)
        ok = f(np.exp(mid)) >= target
        lhi = np.where(ok, mid, lhi)
        llo = np.where(ok, llo, mid)
    return np.exp(lhi)


def _recover(prob: _Problem, assign: np.ndarray, V0=None, G0=None,
             max_sweeps: int = 200, cap_tol: float = 1e-9,
             demand_tol: float = 1e-6) -> _Recovered:
    """Exact minimum-power allocation for a fixed subcarrier assignment.

    Alternates exact maximisation of the (smooth, concave) dual in the QoS
    multipliers and in the power-cap multipliers. Ends with power caps
    satisfied; demands are met exactly unless the assignment is infeasible.
    """
    M, J, N, K = prob.shape
    nw = prob.n_windows
    assign = _repair(prob, assign)
    mm, jj, nn = np.nonzero(assign >= 0)
    kk = assign[mm, jj, nn]
    ent = kk * nw + prob.window[mm]
    blk = mm * J + jj
    cl = prob.c[mm, jj, nn, kk]
    Ll = prob.L[jj].astype(float)
    C = prob.demand.ravel()
    pmax_b = np.repeat(prob.pmax[None, :], M, axis=0).ravel()
    n_ent, n_blk = K * nw, M * J
    scale = prob.bsdt * LOG2E

    has_link = np.bincount(ent, minlength=n_ent) > 0
    want = (C > 0) & has_link
    V = np.zeros(n_ent) if V0 is None else np.where(want, np.asarray(V0, dtype=float).ravel(), 0.0)
    G = np.zeros(n_blk) if G0 is None else np.asarray(G0, dtype=float).ravel().copy()

    def bits_for(Vent, Gb, sel):
        """Delivered bits of the entities in ``sel`` at levels ``Vent``."""
        W = cl * Vent[ent] / (1.0 + Gb[blk])
        _, _, g = kernels.link_response(W, Ll)
        return np.bincount(ent, weights=g * scale, minlength=n_ent)[sel]

    def power_for(Vent, Gb, sel):
        W = cl * Vent[ent] / (1.0 + Gb[blk])
        x, _, _ = kernels.link_response(W, Ll)
        return np.bincount(blk, weights=x / cl, minlength=n_blk)[sel]

    # level below which an entity gets nothing on any of its links
    floor = np.full(n_ent, np.inf)

    def nu_step():
        np.minimum.at(floor, ent, (1.0 + G[blk]) / cl)
        idx = np.flatnonzero(want)
        if idx.size == 0:
            return
        lo = floor[idx].copy()
        hi = np.maximum(V[idx], lo * 2.0)
        Vt = V.copy()
        for _ in range(40):
            Vt[idx] = hi
            W = cl * Vt[ent] / (1.0 + G[blk])
            x, _, g = kernels.link_response(W, Ll)
            got = np.bincount(ent, weights=g * scale, minlength=n_ent)[idx]
            # a user whose single link already breaks its block cap cannot be
            # helped by a higher level; the cap step takes over from there
            sat = np.bincount(ent, weights=x / cl > pmax_b[blk], minlength=n_ent)[idx] > 0
            short = (got < C[idx]) & ~sat
            if not short.any():
                break
            lo = np.where(short, hi, lo)
            hi = np.where(short, hi * 4.0, hi)
        lo = np.minimum(lo, hi)

        def f(v):
            Vt[idx] = v
            return bits_for(Vt, G, idx)
        V[idx] = _bisect_log(f, C[idx], lo, hi)
        floor.fill(np.inf)

    def gamma_step():
        G[:] = 0.0
        over = np.flatnonzero(power_for(V, G, slice(None)) > pmax_b)
        if over.size == 0:
            return
        lo = np.ones(over.size)
        hi = np.full(over.size, 2.0)
        Gt = G.copy()
        for _ in range(40):
            Gt[over] = hi - 1.0
            high = power_for(V, Gt, over) > pmax_b[over]
            if not high.any():
                break
            lo = np.where(high, hi, lo)
            hi = np.where(high, hi * 4.0, hi)

        def f(a):
            # decreasing in a; bisect on the negated power
            Gt[over] = a - 1.0
            return -power_for(V, Gt, over)
        G[over] = _bisect_log(f, -pmax_b[over], lo, hi) - 1.0

    short_prev, stalled = math.inf, 0
    for _ in range(max_sweeps):
        nu_step()
        if np.all(power_for(V, G, slice(None)) <= pmax_b * (1.0 + cap_tol)):
            break
        gamma_step()
        # caps now hold exactly; stop once the demands are met closely enough
        got = bits_for(V, G, slice(None))
        if np.all(got >= C * (1.0 - demand_tol)):
            break
        # or once the shortfall stops shrinking (the assignment is infeasible)
        short = float(np.maximum(C - got, 0.0).sum())
        stalled = stalled + 1 if short >= short_prev * (1.0 - 1e-9) else 0
        short_prev = min(short, short_prev)
        if stalled >= 5:
            break

    W = cl * V[ent] / (1.0 + G[blk])
    x, e, g = kernels.link_response(W, Ll)
    p = x / cl
    over = np.bincount(blk, weights=p, minlength=n_blk) / pmax_b
    if np.any(over > 1.0 + cap_tol):
        # last resort after an unfinished alternation: shrink offending
        # blocks onto their caps
        p = p / np.maximum(over, 1.0)[blk]
        x = p * cl
        e = np.where(Ll > 0, _u_closed(x, np.where(Ll > 0, Ll, 1.0)) - 1.0, 0.0)
        g = _rate_at_power(x, Ll)
    power = np.zeros((M, J, N))
    power[mm, jj, nn] = p
    e_full = np.zeros((M, J, N))
    e_full[mm, jj, nn] = e
    active = p > 0
    out_assign = np.full((M, J, N), -1, dtype=np.int64)
    out_assign[mm[active], jj[active], nn[active]] = kk[active]
    delivered = np.bincount(ent, weights=g * scale, minlength=n_ent).reshape(K, nw)
    block_power = np.bincount(blk, weights=p, minlength=n_blk).reshape(M, J)
    demand = prob.demand
    feasible = bool(np.all(delivered >= demand * (1.0 - DEMAND_SLACK))
                    and np.all(block_power <= prob.pmax[None, :] * (1.0 + POWER_SLACK)))
    return _Recovered(out_assign, power, e_full, delivered, block_power,
                      V.reshape(K, nw), G.reshape(M, J), feasible, power.sum() / prob.KM,
                      np.maximum(demand - delivered, 0.0))


def _fixed_allocation(prob: _Problem, assign: np.ndarray, power: np.ndarray) -> _Recovered:
    """Bookkeeping for a given assignment and power, no optimisation."""
    M, J, N, K = prob.shape
    nw = prob.n_windows
    power = np.where(assign >= 0, power, 0.0)
    mm, jj, nn = np.nonzero(power > 0)
    kk = assign[mm, jj, nn]
    x = prob.c[mm, jj, nn, kk] * power[mm, jj, nn]
    Ll = prob.L[jj].astype(float)
    g = _rate_at_power(x, Ll)
    e = np.zeros((M, J, N))
    e[mm, jj, nn] = np.where(Ll > 0, _u_closed(x, np.where(Ll > 0, Ll, 1.0)) - 1.0, 0.0)
    out_assign = np.where(power > 0, assign, -1)
    delivered = np.bincount(kk * nw + prob.window[mm], weights=g * prob.bsdt * LOG2E,
                            minlength=K * nw).reshape(K, nw)
    block_power = power.sum(axis=2)
    feasible = bool(np.all(delivered >= prob.demand * (1.0 - DEMAND_SLACK))
                    and np.all(block_power <= prob.pmax[None, :] * (1.0 + POWER_SLACK)))
    return _Recovered(out_assign, power, e, delivered, block_power,
                      np.zeros((K, nw)), np.zeros((M, J)), feasible, power.sum() / prob.KM,
                      np.maximum(prob.demand - delivered, 0.0))


def _local_search(prob: _Problem, rec: _Recovered, budget: int) -> _Recovered:
    """First-improvement search over single-link moves.

    Moves (hand link ``l`` to user ``k``) are tried in order of the surplus
    ``k`` would gain over the current holder at the current multipliers;
    each try is an exact recovery. Stops after ``budget`` tries or a pass
    without improvement.
    """
    best = rec
    K = prob.shape[3]
    wanted = (prob.demand[:, prob.window] > 0).T[:, None, None, :]     # (M, 1, 1, K)
    tries = 0
    while tries < budget and best.feasible:
        S, _ = _surplus(prob, best.V, best.G)
        own = best.assign
        held = np.take_along_axis(S, np.maximum(own, 0)[..., None], -1)[..., 0]
        gain = S - np.where(own >= 0, held, 0.0)[..., None]
        gain = np.where(wanted & (np.arange(K) != own[..., None]), gain, -np.inf)
        order = np.argsort(-gain, axis=None, kind="stable")
        improved = False
        for idx in order[:budget - tries]:
            if not np.isfinite(gain.flat[idx]):
                break
            m, j, n, k = np.unravel_index(idx, gain.shape)
            trial = own.copy()
            trial[m, j, n] = k
            cand = _recover(prob, trial, best.V, best.G)
            tries += 1
            if _better(cand, best):
                best = cand
                improved = True
                break
        if not improved:
            break
    return best


def _power_change(a0, p0, a1, p1):
    same = a0 == a1
    d2 = np.where(same, (p1 - p0) ** 2, p0 ** 2 + p1 ** 2).sum()
    n2 = (p1 ** 2).sum()
    if n2 == 0.0:
        return 0.0 if d2 == 0.0 else math.inf
    return math.sqrt(d2 / n2)


def _solve(prob: _Problem, config: SolverConfig):
    """Run the dual iteration on ``prob``.

    Returns the best recovered allocation, the multipliers of the best dual
    point, the iteration count, the per-iteration power trace and the best
    dual value (all objective values in watts per user-slot).
    """
    M, J, N, K = prob.shape
    C = prob.demand
    want = C > 0
    bits = prob.bsdt * LOG2E
    target_rate = C / bits
    pmax = prob.pmax[None, :]

    best = _recover(prob, greedy_assignment(prob))
    V = np.where(want, best.V, 0.0)
    G = best.G.copy()
    # users the initial allocation could not serve start just above the
    # level where their best link turns on
    cbest = np.zeros((K, prob.n_windows))
    np.maximum.at(cbest.T, prob.window, prob.c.max(axis=(1, 2)))
    start = 2.0 * (1.0 + G.max()) / np.where(cbest > 0, cbest, np.inf)
    V = np.where(want & (V <= 0), start, V)
    if config.step_rule == "diminishing":
        G = np.maximum(G, 1e-3)

    # every feasible point spends at most all caps in every slot, so a dual
    # value above this certifies infeasibility
    ceiling = prob.pmax.sum() * M / prob.KM
    theta = config.polyak_theta_0
    stale = 0
    dual_best = -math.inf
    V_best, G_best = V.copy(), G.copy()
    priced_at = None
    trace: list[float] = []
    prev = None
    calm = 0
    it = 0
    for it in range(1, config.max_iterations + 1):
        assign, power, _, _, block, user_rate, u_sum = kernels.dual_sweep(
            prob.c, V, prob.window, G, prob.L)
        trace.append(float(power.sum() / prob.KM))
        dual = (u_sum + (V * target_rate).sum() - (G * pmax).sum()) / prob.KM
        if it == 1 or dual > dual_best + 1e-7 * abs(dual_best):
            dual_best, V_best, G_best = dual, V.copy(), G.copy()
            stale = 0
        else:
            stale += 1
            if stale >= config.polyak_patience:
                theta *= 0.5
                stale = 0

        s_nu = np.where(want, target_rate - user_rate, 0.0)
        s_gam = block - pmax
        s_gam = np.where((G <= 0) & (s_gam < 0), 0.0, s_gam)
        if config.step_rule == "polyak":
            if best.feasible:
                goal = best.objective
            else:
                goal = max(2.0 * dual, dual + trace[-1])
            norm = (s_nu * s_nu).sum() + (s_gam * s_gam).sum()
            t = theta * max(goal - dual, 0.0) * prob.KM / norm if norm > 0 else 0.0
            # both updates are the projected steps of update_nu/update_gamma
            V = np.where(want, np.maximum(V + t * s_nu, 0.0), 0.0)
            G = np.maximum(G + t * s_gam, 0.0)
        else:
            d_gamma = config.step_gamma_0 / it ** config.step_decay
            G = update_gamma(G, d_gamma / pmax, pmax, block)
            d_nu = config.step_nu_0 / it ** config.step_decay
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(want, d_nu * V / C, 0.0)
            V = np.where(want, update_nu(V, step, C, np.minimum(bits * user_rate, 2.0 * C)), 0.0)

        if prev is not None:
            calm = calm + 1 if _power_change(prev[0], prev[1], assign, power) < config.convergence_tol else 0
        prev = (assign, power)
        done = (calm >= config.convergence_window or it == config.max_iterations
                or (config.step_rule == "polyak" and theta < config.polyak_theta_min)
                or dual_best > ceiling)
        if it % config.recover_every == 0 or done:
            if priced_at is None or not np.array_equal(priced_at[0], V_best):
                priced_at = (V_best, G_best)
                cand = _recover(prob, priced_assignment(prob, V_best, G_best), V_best, G_best)
                if _better(cand, best):
                    best = cand
            if best.feasible and best.objective - dual_best <= config.gap_tol * best.objective:
                done = True
        if done:
            break
    if config.local_search_budget:
        best = _local_search(prob, best, config.local_search_budget)
    return best, V_best, G_best, it, trace, dual_best


def _better(a: _Recovered, b: _Recovered) -> bool:
    if a.feasible != b.feasible:
        return a.feasible
    if a.feasible:
        return a.objective < b.objective
    return a.deficit.sum() < b.deficit.sum()


def _to_result(prob: _Problem, best: _Recovered, V, G, it, trace,
               dual_bound: float = -math.inf) -> AllocationResult:
    M, J, N, K = prob.shape
    power = np.zeros((K, M, J, N))
    assignment = np.zeros((K, M, J, N), dtype=bool)
    omega = np.zeros((K, M, J, N))
    mm, jj, nn = np.nonzero(best.assign >= 0)
    kk = best.assign[mm, jj, nn]
    power[kk, mm, jj, nn] = best.power[mm, jj, nn]
    assignment[kk, mm, jj, nn] = True
    omega[kk, mm, jj, nn] = np.log1p(best.e[mm, jj, nn])
    nu = V / (prob.bsdt * LOG2E * prob.KM)
    if nu.shape[1] == 1:
        nu = nu[:, 0]
    dual = DualState(gamma=G / prob.KM, nu=nu, omega=omega, iteration=it)
    return AllocationResult(
        allocation=AllocationTensor(power, assignment),
        avg_power=float(power.sum() / prob.KM),
        delivered_bits=best.delivered.sum(axis=1),
        feasible=best.feasible,
        dual_state=dual,
        iterations_used=it,
        convergence_trace=trace,
        dual_bound=float(dual_bound),
        deficits=best.deficit,
        block_power=best.block_power,
    )


def run_allocation(channel: ChannelTensor, scenario: Scenario,
                   config: SolverConfig | None = None) -> AllocationResult:
    """Long-term allocation over all users and slots of ``scenario``."""
    config = config or SolverConfig()
    prob = _Problem.build(scenario, channel.gains)
    if not np.any(prob.demand > 0):
        return _to_result(prob, _recover(prob, np.full(prob.shape[:3], -1)),
                          np.zeros_like(prob.demand), np.zeros(prob.shape[:2]), 0, [])
    return _to_result(prob, *_solve(prob, config))


@dataclass
class Evaluation:
    avg_power: float
    delivered_bits: np.ndarray    # (K,)
    block_power: np.ndarray       # (M, J)
    violations: list[str]
    stderr_bits: np.ndarray | None = None


def evaluate_allocation(allocation: AllocationTensor, channel: ChannelTensor, scenario: Scenario,
                        mode: str = "de", rng: np.random.Generator | None = None,
                        samples: int = 4000) -> Evaluation:
    """Objective, per-user delivered bits (deterministic equivalent or
    Monte-Carlo) and constraint violations of an allocation."""
    if mode not in ("de", "mc"):
        raise ValueError("mode must be 'de' or 'mc'")
    K, M, J, N = channel.shape
    P = allocation.power
    noise = scenario.noise.per_subcarrier_power
    L = scenario.antenna_counts
    bsdt = scenario.plan.subcarrier_bandwidth * scenario.grid.slot_length
    kk, mm, jj, nn = np.nonzero(P > 0)
    snr = P[kk, mm, jj, nn] * channel.gains[kk, mm, jj, nn] / noise
    Ll = L[jj]
    stderr = None
    if mode == "de":
        r = deterministic_rate_array(snr, Ll)
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        r = np.empty(snr.size)
        var = np.empty(snr.size)
        for lval in np.unique(Ll):
            sel = np.flatnonzero(Ll == lval)
            for start in range(0, sel.size, 256):
                s = sel[start:start + 256]
                X = rng.standard_gamma(lval, size=(s.size, samples)) / lval
                v = LOG2E * np.log1p(snr[s, None] * X)
                r[s] = v.mean(axis=1)
                var[s] = v.var(axis=1, ddof=1) / samples if samples > 1 else 0.0
        stderr = np.sqrt(np.bincount(kk, weights=var * bsdt ** 2, minlength=K))
    delivered = np.bincount(kk, weights=r * bsdt, minlength=K)
    block = P.sum(axis=(0, 3))
    violations = allocation.check()
    pmax = scenario.max_powers
    for m, j in zip(*np.nonzero(block > pmax[None, :] * (1.0 + POWER_SLACK))):
        violations.append(f"slot {m} bs {j}: power {block[m, j]:.6g} W exceeds {pmax[j]:.6g} W")
    demand = scenario.demands
    for k in np.flatnonzero(delivered < demand * (1.0 - DEMAND_SLACK)):
        violations.append(f"user {k}: delivered {delivered[k]:.6g} of {demand[k]:.6g} bits")
    return Evaluation(float(P.sum() / (K * M)), delivered, block, violations, stderr)


# --- dumps -------------------------------------------------------------------

ALLOCATION_COLUMNS = ("k", "m", "j", "n", "power_w", "assigned")


def write_allocation_csv(result: AllocationResult, fh) -> int:
    """Write the assigned or powered links of ``result`` to an open text file.

    Links that are neither assigned nor powered are left out; a full
    ``K M J N`` table at full scale would run to a million rows of zeros.
    Returns the number of rows written.
    """
    alloc = result.allocation
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(ALLOCATION_COLUMNS)
    idx = np.argwhere(alloc.assignment | (alloc.power > 0))
    for k, m, j, n in idx:
        w.writerow([k, m, j, n, f"{alloc.power[k, m, j, n]:.9g}",
                    int(alloc.assignment[k, m, j, n])])
    return len(idx)


def result_summary(result: AllocationResult) -> dict:
    """Plain-data summary of a run (JSON-ready)."""
    out = {
        "avg_power_w": float(f"{result.avg_power:.9g}"),
        "feasible": bool(result.feasible),
        "iterations_used": int(result.iterations_used),
        "per_user_delivered_bits": [float(f"{b:.9g}") for b in result.delivered_bits],
    }
    if np.isfinite(result.dual_bound):
        out["dual_bound_w"] = float(f"{result.dual_bound:.9g}")
    table = result.deficit_table()
    if table:
        out["deficits"] = [{"user": k, "window": w, "missing_bits": float(f"{b:.9g}")}
                           for k, w, b in table]
    return out
