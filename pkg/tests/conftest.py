import numpy as np
import pytest

from lanealloc.scenario import BaseStation, CarrierPlan, Lane, Scenario, TimeGrid, User


def make_scenario(user_points, bs_points=((0.0, 0.0),), slots=2, slot_length=10.0,
                  subcarriers=2, demands=None, antennas=16, max_power=40.0,
                  bs_height=100.0, ship_height=10.0, sub_bw=2e6):
    """Small world; ``user_points[k]`` is a start or a (start, end) pair."""
    T = slots * slot_length
    users = []
    for k, pts in enumerate(user_points):
        if np.ndim(pts) == 1:
            pts = (pts, pts)
        lane = Lane((0.0, T), (tuple(map(float, pts[0])), tuple(map(float, pts[1]))))
        d = 1e6 if demands is None else float(demands[k])
        users.append(User(k, lane, ship_height, d))
    stations = tuple(BaseStation(j, tuple(map(float, p)), bs_height, antennas, max_power)
                     for j, p in enumerate(bs_points))
    return Scenario(stations, tuple(users), CarrierPlan(1.9e9, sub_bw * subcarriers, subcarriers),
                    TimeGrid(slots, slot_length), -174.0)


@pytest.fixture
def small_world():
    return make_scenario([(3000.0, 4000.0), ((8000.0, 1000.0), (8400.0, 1300.0))],
                         demands=(2e8, 3e8))


MINIMAL_DOC = """\
system:
  carrier_frequency_hz: 1.9e9
  total_bandwidth_hz: 30e6
  subcarrier_count: 15
  slot_count: 2
  slot_length_s: 10
  noise_density_dbm_per_hz: -174
bs:
  - {id: 0, x_m: 0, y_m: 0, antenna_height_m: 100, antenna_count: 16, max_power_w: 40}
user:
  - id: 0
    antenna_height_m: 10
    demand_bits: 1.0e6
    lane:
      - {t_s: 0, x_m: 1000, y_m: 2000}
      - {t_s: 20, x_m: 1200, y_m: 2000}
"""


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion."""
    def record(name: str, ok: bool, runtime: float, detail: str = ""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}  ({runtime:.1f} s)  {detail}".rstrip()
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
