"""Scenario description: base stations, shipping lanes, users and the
carrier/time plan, plus the YAML reader and writer for it.

All quantities are SI (W, Hz, s, m, bits). Indices are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any

import numpy as np
import yaml


class ScenarioError(ValueError):
    """Raised for unparsable documents and invariant violations."""


@dataclass(frozen=True)
class BaseStation:
    id: int
    position: tuple[float, float]
    antenna_height: float
    antenna_count: int
    max_power: float

    def __post_init__(self):
        if not self.antenna_height > 0:
            raise ScenarioError(f"bs {self.id}: antenna_height must be > 0")
        if self.antenna_count < 1:
            raise ScenarioError(f"bs {self.id}: antenna_count must be >= 1")
        if not self.max_power > 0:
            raise ScenarioError(f"bs {self.id}: max_power must be > 0")


@dataclass(frozen=True)
class Lane:
    """Timestamped waypoints; the ship moves linearly between them."""

    times: tuple[float, ...]
    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.times) < 2:
            raise ScenarioError("lane needs at least 2 waypoints")
        if len(self.times) != len(self.points):
            raise ScenarioError("lane times and points differ in length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ScenarioError("lane waypoint timestamps must be strictly increasing")

    @classmethod
    def from_waypoints(cls, waypoints) -> "Lane":
        times = tuple(float(t) for t, _ in waypoints)
        points = tuple((float(p[0]), float(p[1])) for _, p in waypoints)
        return cls(times, points)

    @property
    def max_speed(self) -> float:
        t = np.asarray(self.times)
        p = np.asarray(self.points)
        return float(np.max(np.hypot(*np.diff(p, axis=0).T) / np.diff(t)))


@dataclass(frozen=True)
class User:
    id: int
    lane: Lane
    antenna_height: float
    demand: float

    def __post_init__(self):
        if not self.antenna_height > 0:
            raise ScenarioError(f"user {self.id}: antenna_height must be > 0")
        if not self.demand >= 0:
            raise ScenarioError(f"user {self.id}: demand must be >= 0")


@dataclass(frozen=True)
class CarrierPlan:
    carrier_frequency: float
    total_bandwidth: float
    subcarrier_count: int

    def __post_init__(self):
        if self.subcarrier_count < 1:
            raise ScenarioError("subcarrier_count must be >= 1")
        if not self.total_bandwidth > 0:
            raise ScenarioError("total_bandwidth must be > 0")
        if not self.carrier_frequency > self.total_bandwidth:
            raise ScenarioError("carrier_frequency must exceed total_bandwidth")

    @property
    def subcarrier_bandwidth(self) -> float:
        return self.total_bandwidth / self.subcarrier_count


@dataclass(frozen=True)
class TimeGrid:
    slot_count: int
    slot_length: float

    def __post_init__(self):
        if self.slot_count < 1:
            raise ScenarioError("slot_count must be >= 1")
        if not self.slot_length > 0:
            raise ScenarioError("slot_length must be > 0")

    @property
    def duration(self) -> float:
        return self.slot_count * self.slot_length

    def slot_times(self) -> np.ndarray:
        """Representative time of every slot (its midpoint)."""
        return (np.arange(self.slot_count) + 0.5) * self.slot_length


@dataclass(frozen=True)
class NoiseModel:
    density_dbm_per_hz: float
    subcarrier_bandwidth: float

    @property
    def noise_density(self) -> float:
        return 10.0 ** ((self.density_dbm_per_hz - 30.0) / 10.0)

    @property
    def per_subcarrier_power(self) -> float:
        return self.noise_density * self.subcarrier_bandwidth


@dataclass(frozen=True)
class Scenario:
    base_stations: tuple[BaseStation, ...]
    users: tuple[User, ...]
    plan: CarrierPlan
    grid: TimeGrid
    noise_density_dbm_per_hz: float

    def __post_init__(self):
        if not self.base_stations:
            raise ScenarioError("scenario needs at least one base station")
        if not self.users:
            raise ScenarioError("scenario needs at least one user")
        for u in self.users:
            lane = u.lane
            if lane.times[0] > 0.0 or lane.times[-1] < self.grid.duration:
                raise ScenarioError(
                    f"user {u.id}: lane covers [{lane.times[0]}, {lane.times[-1]}] s "
                    f"but the service runs over [0, {self.grid.duration}] s"
                )

    @property
    def J(self) -> int:
        return len(self.base_stations)

    @property
    def K(self) -> int:
        return len(self.users)

    @property
    def M(self) -> int:
        return self.grid.slot_count

    @property
    def N(self) -> int:
        return self.plan.subcarrier_count

    @property
    def noise(self) -> NoiseModel:
        return NoiseModel(self.noise_density_dbm_per_hz, self.plan.subcarrier_bandwidth)

    @property
    def demands(self) -> np.ndarray:
        return np.array([u.demand for u in self.users], dtype=float)

    @property
    def antenna_counts(self) -> np.ndarray:
        return np.array([b.antenna_count for b in self.base_stations], dtype=np.int64)

    @property
    def max_powers(self) -> np.ndarray:
        return np.array([b.max_power for b in self.base_stations], dtype=float)

    def with_slots(self, slot_count: int) -> "Scenario":
        """Same world restricted to the first ``slot_count`` slots."""
        return replace(self, grid=replace(self.grid, slot_count=slot_count))

    def with_subcarriers(self, subcarrier_count: int) -> "Scenario":
        """Change N while keeping the per-subcarrier bandwidth."""
        bs = self.plan.subcarrier_bandwidth
        plan = replace(self.plan, subcarrier_count=subcarrier_count,
                       total_bandwidth=bs * subcarrier_count)
        return replace(self, plan=plan)

    def with_demands(self, demands) -> "Scenario":
        users = tuple(replace(u, demand=float(d)) for u, d in zip(self.users, demands))
        return replace(self, users=users)


def position_at(lane: Lane, t: float) -> np.ndarray:
    """Piecewise-linear position of a ship on its lane at time ``t``."""
    times = lane.times
    if not times[0] <= t <= times[-1]:
        raise ScenarioError(f"time {t} outside lane span [{times[0]}, {times[-1]}]")
    pts = np.asarray(lane.points)
    return np.array([np.interp(t, times, pts[:, 0]), np.interp(t, times, pts[:, 1])])


def slot_positions(scenario: Scenario) -> np.ndarray:
    """User positions at every slot midpoint, shape (K, M, 2)."""
    t = scenario.grid.slot_times()
    out = np.empty((scenario.K, scenario.M, 2))
    for k, u in enumerate(scenario.users):
        pts = np.asarray(u.lane.points)
        out[k, :, 0] = np.interp(t, u.lane.times, pts[:, 0])
        out[k, :, 1] = np.interp(t, u.lane.times, pts[:, 1])
    return out


def distance_tensor(scenario: Scenario) -> np.ndarray:
    """BS-user distances d[k, m, j] in meters."""
    bs = np.array([b.position for b in scenario.base_stations])
    pos = slot_positions(scenario)
    d = np.hypot(pos[:, :, None, 0] - bs[None, None, :, 0],
                 pos[:, :, None, 1] - bs[None, None, :, 1])
    if np.any(d <= 0.0):
        k, m, j = np.argwhere(d <= 0.0)[0]
        raise ScenarioError(f"user {k} is at the location of bs {j} in slot {m}")
    return d


def slot_distance(scenario: Scenario, k: int, m: int, j: int) -> float:
    if not (0 <= k < scenario.K and 0 <= m < scenario.M and 0 <= j < scenario.J):
        raise IndexError(f"(k={k}, m={m}, j={j}) out of range")
    t = (m + 0.5) * scenario.grid.slot_length
    p = position_at(scenario.users[k].lane, t)
    b = scenario.base_stations[j].position
    d = math.hypot(p[0] - b[0], p[1] - b[1])
    if d <= 0.0:
        raise ScenarioError(f"user {k} is at the location of bs {j} in slot {m}")
    return d


# --- YAML document I/O -----------------------------------------------------

SYSTEM_FIELDS = ("carrier_frequency_hz", "total_bandwidth_hz", "subcarrier_count",
                 "slot_count", "slot_length_s", "noise_density_dbm_per_hz")
BS_FIELDS = ("id", "x_m", "y_m", "antenna_height_m", "antenna_count", "max_power_w")
USER_FIELDS = ("id", "antenna_height_m", "demand_bits", "lane")
WAYPOINT_FIELDS = ("t_s", "x_m", "y_m")


def _to_plain(node, path, lines):
    """Convert a composed YAML node tree to python objects, recording the
    source line of every path."""
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for knode, vnode in node.value:
            key = knode.value
            out[key] = _to_plain(vnode, path + (key,), lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_to_plain(v, path + (i,), lines) for i, v in enumerate(node.value)]
    return node.value


class _Reader:
    def __init__(self, lines):
        self.lines = lines

    def fail(self, path, msg):
        line = None
        p = tuple(path)
        while p and line is None:
            line = self.lines.get(p)
            p = p[:-1]
        where = ".".join(str(x) for x in path)
        loc = f" (line {line})" if line is not None else ""
        raise ScenarioError(f"{where}{loc}: {msg}")

    def mapping(self, obj, path, fields):
        if not isinstance(obj, dict):
            self.fail(path, "expected a mapping")
        missing = [f for f in fields if f not in obj]
        if missing:
            self.fail(path, f"missing field(s) {', '.join(missing)}")
        unknown = [f for f in obj if f not in fields]
        if unknown:
            self.fail(path + (unknown[0],), "unknown field")
        return obj

    def number(self, obj, path):
        if isinstance(obj, (list, dict)):
            self.fail(path, "expected a number")
        try:
            x = float(obj)
        except (TypeError, ValueError):
            self.fail(path, f"expected a number, got {obj!r}")
        if not math.isfinite(x):
            self.fail(path, "number must be finite")
        return x

    def integer(self, obj, path):
        x = self.number(obj, path)
        if x != int(x):
            self.fail(path, f"expected an integer, got {obj!r}")
        return int(x)

    def sequence(self, obj, path):
        if not isinstance(obj, list):
            self.fail(path, "expected a list")
        return obj


def load_scenario(document: str) -> Scenario:
    """Parse and validate a scenario document (YAML text)."""
    try:
        root = yaml.compose(document)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        raise ScenarioError(f"{where}cannot parse scenario: {exc}") from exc
    lines: dict = {}
    if root is None:
        raise ScenarioError("empty scenario document")
    doc = _to_plain(root, (), lines)
    rd = _Reader(lines)
    rd.mapping(doc, (), ("system", "bs", "user"))

    sysd = rd.mapping(doc["system"], ("system",), SYSTEM_FIELDS)
    p = ("system",)
    try:
        plan = CarrierPlan(rd.number(sysd["carrier_frequency_hz"], p + ("carrier_frequency_hz",)),
                           rd.number(sysd["total_bandwidth_hz"], p + ("total_bandwidth_hz",)),
                           rd.integer(sysd["subcarrier_count"], p + ("subcarrier_count",)))
        grid = TimeGrid(rd.integer(sysd["slot_count"], p + ("slot_count",)),
                        rd.number(sysd["slot_length_s"], p + ("slot_length_s",)))
    except ScenarioError as exc:
        if "line" in str(exc):
            raise
        rd.fail(p, str(exc))
    noise = rd.number(sysd["noise_density_dbm_per_hz"], p + ("noise_density_dbm_per_hz",))

    stations = []
    for i, b in enumerate(rd.sequence(doc["bs"], ("bs",))):
        p = ("bs", i)
        rd.mapping(b, p, BS_FIELDS)
        try:
            stations.append(BaseStation(
                id=rd.integer(b["id"], p + ("id",)),
                position=(rd.number(b["x_m"], p + ("x_m",)), rd.number(b["y_m"], p + ("y_m",))),
                antenna_height=rd.number(b["antenna_height_m"], p + ("antenna_height_m",)),
                antenna_count=rd.integer(b["antenna_count"], p + ("antenna_count",)),
                max_power=rd.number(b["max_power_w"], p + ("max_power_w",)),
            ))
        except ScenarioError as exc:
            if "line" in str(exc):
                raise
            rd.fail(p, str(exc))

    users = []
    for i, u in enumerate(rd.sequence(doc["user"], ("user",))):
        p = ("user", i)
        rd.mapping(u, p, USER_FIELDS)
        wps = []
        for w_i, w in enumerate(rd.sequence(u["lane"], p + ("lane",))):
            wp = p + ("lane", w_i)
            rd.mapping(w, wp, WAYPOINT_FIELDS)
            wps.append((rd.number(w["t_s"], wp + ("t_s",)),
                        (rd.number(w["x_m"], wp + ("x_m",)), rd.number(w["y_m"], wp + ("y_m",)))))
        try:
            lane = Lane.from_waypoints(wps)
            users.append(User(id=rd.integer(u["id"], p + ("id",)), lane=lane,
                              antenna_height=rd.number(u["antenna_height_m"], p + ("antenna_height_m",)),
                              demand=rd.number(u["demand_bits"], p + ("demand_bits",))))
        except ScenarioError as exc:
            if "line" in str(exc):
                raise
            rd.fail(p + ("lane",) if "lane" in str(exc) else p, str(exc))

    try:
        return Scenario(tuple(stations), tuple(users), plan, grid, noise)
    except ScenarioError as exc:
        raise ScenarioError(f"scenario: {exc}") from exc


def read_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return load_scenario(fh.read())


def scenario_to_dict(scenario: Scenario) -> dict[str, Any]:
    return {
        "system": {
            "carrier_frequency_hz": scenario.plan.carrier_frequency,
            "total_bandwidth_hz": scenario.plan.total_bandwidth,
            "subcarrier_count": scenario.plan.subcarrier_count,
            "slot_count": scenario.grid.slot_count,
            "slot_length_s": scenario.grid.slot_length,
            "noise_density_dbm_per_hz": scenario.noise_density_dbm_per_hz,
        },
        "bs": [{"id": b.id, "x_m": b.position[0], "y_m": b.position[1],
                "antenna_height_m": b.antenna_height, "antenna_count": b.antenna_count,
                "max_power_w": b.max_power} for b in scenario.base_stations],
        "user": [{"id": u.id, "antenna_height_m": u.antenna_height, "demand_bits": u.demand,
                  "lane": [{"t_s": t, "x_m": p[0], "y_m": p[1]}
                           for t, p in zip(u.lane.times, u.lane.points)]}
                 for u in scenario.users],
    }


def dump_scenario(scenario: Scenario) -> str:
    """Emit a document that :func:`load_scenario` reads back identically."""
    return yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False, default_flow_style=None)


def write_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_scenario(scenario))
