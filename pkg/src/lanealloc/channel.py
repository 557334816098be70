"""Large-scale gains from the two-ray shore-to-ship model, and small-scale
fading draws."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .scenario import CarrierPlan, Scenario, distance_tensor

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ChannelTensor:
    """Large-scale linear power gains indexed ``gains[k, m, j, n]``."""

    gains: np.ndarray

    def __post_init__(self):
        g = self.gains
        if g.ndim != 4:
            raise ValueError(f"gain tensor must be 4-D, got shape {g.shape}")
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise ValueError("gains must be finite and nonnegative")
        g.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.gains.shape


def subcarrier_frequencies(plan: CarrierPlan) -> np.ndarray:
    n = np.arange(plan.subcarrier_count)
    return plan.carrier_frequency + (n - (plan.subcarrier_count - 1) / 2.0) * plan.subcarrier_bandwidth


def subcarrier_wavelength(plan: CarrierPlan, n: int) -> float:
    """Wavelength of subcarrier ``n`` (0-based), centred on the carrier."""
    if not 0 <= n < plan.subcarrier_count:
        raise IndexError(f"subcarrier {n} out of range [0, {plan.subcarrier_count})")
    f = plan.carrier_frequency + (n - (plan.subcarrier_count - 1) / 2.0) * plan.subcarrier_bandwidth
    return SPEED_OF_LIGHT / f


def two_ray_gain(wavelength, distance, h_bs, h_user):
    """Two-ray path gain ``(lam/(4 pi d))^2 * (2 sin(2 pi h1 h2 / (lam d)))^2``.

    Broadcasts over array arguments. Exact sine nulls return 0.
    """
    lam = np.asarray(wavelength, dtype=float)
    d = np.asarray(distance, dtype=float)
    h1 = np.asarray(h_bs, dtype=float)
    h2 = np.asarray(h_user, dtype=float)
    for name, v in (("wavelength", lam), ("distance", d), ("h_bs", h1), ("h_user", h2)):
        if np.any(v <= 0):
            raise ValueError(f"{name} must be positive")
    arg = 2.0 * np.pi * h1 * h2 / (lam * d)
    s = np.sin(arg)
    # sin(k*pi) evaluates to ~1e-16 rather than 0 in floating point
    null = np.abs(np.remainder(arg + 0.5 * np.pi, np.pi) - 0.5 * np.pi) <= 8 * np.finfo(float).eps * arg
    s = np.where(null, 0.0, s)
    out = (lam / (4.0 * np.pi * d)) ** 2 * (2.0 * s) ** 2
    return float(out) if out.ndim == 0 else out


def build_channel_tensor(scenario: Scenario) -> ChannelTensor:
    d = distance_tensor(scenario)                                   # (K, M, J)
    lam = SPEED_OF_LIGHT / subcarrier_frequencies(scenario.plan)    # (N,)
    h1 = np.array([b.antenna_height for b in scenario.base_stations])
    h2 = np.array([u.antenna_height for u in scenario.users])
    gains = two_ray_gain(lam[None, None, None, :], d[:, :, :, None],
                         h1[None, None, :, None], h2[:, None, None, None])
    return ChannelTensor(np.ascontiguousarray(gains))


def sample_small_scale(L: int, rng: np.random.Generator, size=None):
    """Squared norm of an L-entry CN(0, I) vector, i.e. a Gamma(L, 1) draw."""
    if L < 1:
        raise ValueError("antenna count must be >= 1")
    return rng.standard_gamma(L, size=size)


def write_channel_tensor(channel: ChannelTensor, path) -> None:
    """Header of four little-endian uint64 dims, then row-major float64."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4Q", *channel.shape))
        fh.write(np.ascontiguousarray(channel.gains, dtype="<f8").tobytes())


def read_channel_tensor(path) -> ChannelTensor:
    with open(path, "rb") as fh:
        dims = struct.unpack("<4Q", fh.read(32))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != math.prod(dims):
        raise ValueError(f"tensor body holds {data.size} values, header says {dims}")
    return ChannelTensor(data.reshape(dims).astype(float))
