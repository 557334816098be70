"""Per-link rates: Monte-Carlo ergodic capacity, the deterministic
equivalent and its fixed point, and the substituted metrics ``g``/``f``.

Rates are evaluated in nats internally and converted to bits at the end.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .channel import sample_small_scale

LOG2E = 1.0 / np.log(2.0)


class FixedPointError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(msg)
        self.residual = residual


@dataclass(frozen=True)
class LinkParams:
    power: float
    gain: float
    noise: float
    antennas: int
    subcarrier_bandwidth: float = 1.0

    def __post_init__(self):
        if self.power < 0 or self.gain < 0:
            raise ValueError("power and gain must be nonnegative")
        if not self.noise > 0:
            raise ValueError("noise must be positive")
        if self.antennas < 1:
            raise ValueError("antennas must be >= 1")

    @property
    def snr(self) -> float:
        return self.power * self.gain / self.noise


@dataclass(frozen=True)
class FixedPoint:
    u_star: float
    residual: float
    iterations: int = 0


class MonteCarloRate(NamedTuple):
    rate: float
    stderr: float


def fixed_point_rhs(u, snr, L):
    """Right-hand side ``1 + x [L + L x / u]^-1`` with ``x = P beta / sigma^2``."""
    return 1.0 + snr / (L + L * snr / u)


def solve_fixed_point(link: LinkParams, tol: float = 1e-12, max_iter: int = 10_000,
                      u0: float = 1.0, damping: float = 0.5) -> FixedPoint:
    """Damped iteration ``u <- (1-a) u + a rhs(u)`` until
    ``|u - rhs(u)| <= tol * max(1, u)``.

    The map is a contraction near the root, so on exit the undamped image
    ``rhs(u)`` (closer to the root than ``u``) is returned with its own
    residual.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    x = link.snr
    if x == 0.0:
        return FixedPoint(1.0, 0.0, 0)
    L = link.antennas
    u = float(u0)
    for it in range(max_iter + 1):
        r = fixed_point_rhs(u, x, L)
        res = u - r
        if abs(res) <= tol * max(1.0, u):
            return FixedPoint(r, abs(r - fixed_point_rhs(r, x, L)), it)
        u = (1.0 - damping) * u + damping * r
    raise FixedPointError(f"fixed point did not converge in {max_iter} iterations "
                          f"(last residual {abs(res):.3e})", abs(res))


def fixed_point_array(snr, L, tol: float = 1e-12, max_iter: int = 10_000, damping: float = 0.5,
                      u0=None):
    """Vectorised damped iteration over arrays of ``snr`` and ``L``;
    ``u0`` is an optional warm start (values below 1 are lifted to 1)."""
    x = np.asarray(snr, dtype=float)
    shape = x.shape
    x = x.ravel()
    L = np.broadcast_to(np.asarray(L, dtype=float), shape).ravel()
    if u0 is None:
        u = np.ones_like(x)
    else:
        u = np.maximum(np.broadcast_to(np.asarray(u0, dtype=float), shape).ravel(), 1.0)
        u = np.where(x > 0, u, 1.0)
    idx = np.flatnonzero(x > 0)
    for _ in range(max_iter):
        if idx.size == 0:
            return u.reshape(shape)
        ua = u[idx]
        r = fixed_point_rhs(ua, x[idx], L[idx])
        done = np.abs(ua - r) <= tol * np.maximum(ua, 1.0)
        u[idx] = np.where(done, r, (1.0 - damping) * ua + damping * r)
        idx = idx[~done]
    if idx.size:
        res = np.abs(u - fixed_point_rhs(u, x, L))[idx].max()
        raise FixedPointError("vectorised fixed point did not converge", res)
    return u.reshape(shape)


def _de_nats(snr, u, L):
    em1 = u - 1.0
    return np.log1p(snr / u) + L * (np.log1p(em1) - em1 / u)


def deterministic_rate(link: LinkParams, tol: float = 1e-12) -> float:
    """Closed-form ergodic-rate approximation in bits/s."""
    if link.snr == 0.0:
        return 0.0
    u = solve_fixed_point(link, tol=tol).u_star
    return float(link.subcarrier_bandwidth * LOG2E * _de_nats(link.snr, u, link.antennas))


def deterministic_rate_array(snr, L, tol: float = 1e-12):
    """Deterministic equivalent in bits/s/Hz for arrays of links."""
    u = fixed_point_array(snr, L, tol=tol)
    return LOG2E * _de_nats(np.asarray(snr, dtype=float), u, np.asarray(L, dtype=float))


def monte_carlo_rate(link: LinkParams, samples: int, rng: np.random.Generator,
                     chunk: int = 1 << 18) -> MonteCarloRate:
    """Empirical ergodic rate with its standard error.

    The fading draw enters as ``X / L`` with ``X ~ Gamma(L, 1)`` so that the
    average link gain equals ``beta``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    x = link.snr
    if x == 0.0:
        return MonteCarloRate(0.0, 0.0)
    L = link.antennas
    s1 = s2 = 0.0
    left = samples
    while left:
        n = min(left, chunk)
        v = np.log1p(x * sample_small_scale(L, rng, n) / L)
        s1 += v.sum()
        s2 += np.dot(v, v)
        left -= n
    mean = s1 / samples
    var = max(s2 / samples - mean * mean, 0.0) * samples / max(samples - 1, 1)
    scale = link.subcarrier_bandwidth * LOG2E
    return MonteCarloRate(scale * mean, scale * np.sqrt(var / samples))


def g_metric(P, omega, gain, noise, antennas):
    """``log2(1 + P beta e^-w / s2) + L log2(e) (w - 1 + e^-w)`` in bits/s/Hz."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValueError("omega must be nonnegative")
    snr = np.asarray(P, dtype=float) * gain / noise
    out = LOG2E * (np.log1p(snr * np.exp(-omega)) + antennas * (omega + np.expm1(-omega)))
    return float(out) if out.ndim == 0 else out


def f_metric(P, u, gain, noise, antennas):
    """``log2(1 + P beta / (u s2)) + L [log2 u - log2(e)(1 - 1/u)]`` in bits/s/Hz."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 1):
        raise ValueError("u must be >= 1")
    snr = np.asarray(P, dtype=float) * gain / noise
    out = LOG2E * _de_nats(snr, u, antennas)
    return float(out) if out.ndim == 0 else out
