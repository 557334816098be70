"""Synthetic maritime world at the reference experiment scale.

Lane geometry and traffic demands were never published, so this draws them:
base stations spaced along a straight coastline (the x axis), ships on
straight tracks inside a band up to 50 km offshore, demands uniform in a
configurable range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import BaseStation, CarrierPlan, Lane, Scenario, TimeGrid, User


@dataclass(frozen=True)
class PaperSetup:
    n_bs: int = 3
    n_users: int = 90
    carrier_frequency: float = 1.9e9
    subcarrier_bandwidth: float = 2e6
    subcarrier_count: int = 15
    slot_count: int = 250
    slot_length: float = 10.0
    antenna_count: int = 16
    bs_height: float = 100.0
    ship_height: float = 10.0
    max_power: float = 40.0
    noise_dbm_per_hz: float = -174.0
    bs_spacing: float = 40e3
    offshore_min: float = 1e3
    offshore_max: float = 50e3
    coast_margin: float = 20e3
    speed_min: float = 5.0
    speed_max: float = 15.0
    demand_min: float = 1.5e9
    demand_max: float = 4.5e9


def generate_paper_scenario(seed: int = 0, setup: PaperSetup | None = None) -> Scenario:
    """Draw a scenario; the same seed always gives the same world."""
    s = setup or PaperSetup()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EA]))
    xs = (np.arange(s.n_bs) - (s.n_bs - 1) / 2.0) * s.bs_spacing
    stations = tuple(BaseStation(j, (float(x), 0.0), s.bs_height, s.antenna_count, s.max_power)
                     for j, x in enumerate(xs))
    x_lo = xs.min() - s.coast_margin
    x_hi = xs.max() + s.coast_margin
    T = s.slot_count * s.slot_length

    def inside(p):
        return x_lo <= p[0] <= x_hi and s.offshore_min <= p[1] <= s.offshore_max

    users = []
    for k in range(s.n_users):
        speed = rng.uniform(s.speed_min, s.speed_max)
        while True:
            start = np.array([rng.uniform(x_lo, x_hi), rng.uniform(s.offshore_min, s.offshore_max)])
            heading = rng.uniform(0.0, 2.0 * np.pi)
            end = start + speed * T * np.array([np.cos(heading), np.sin(heading)])
            if inside(end):
                break
        lane = Lane((0.0, T), ((float(start[0]), float(start[1])), (float(end[0]), float(end[1]))))
        demand = float(rng.uniform(s.demand_min, s.demand_max))
        users.append(User(k, lane, s.ship_height, demand))
    plan = CarrierPlan(s.carrier_frequency, s.subcarrier_bandwidth * s.subcarrier_count,
                       s.subcarrier_count)
    return Scenario(stations, tuple(users), plan, TimeGrid(s.slot_count, s.slot_length),
                    s.noise_dbm_per_hz)
