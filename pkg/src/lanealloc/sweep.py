"""Parameter sweeps over the number of slots or subcarriers.

Each cell of a sweep is one (axis value, scheme, replication) run. Cells are
independent, so they may run in a process pool; the CSV is sorted, so the
output never depends on completion order.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .baselines import run_equal_power, run_myopic
from .channel import build_channel_tensor
from .generate import PaperSetup, generate_paper_scenario
from .scenario import Scenario, read_scenario
from .solver import SolverConfig, run_allocation

AXES = ("slots_M", "subcarriers_N")
SCHEMES = ("proposed", "myopic", "equal_power")
COLUMNS = ("axis", "value", "scheme", "replication", "avg_power_w", "feasible", "iterations")


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple[int, ...]
    schemes: tuple[str, ...] = ("proposed",)
    replications: int = 1
    base_scenario: str | None = None
    setup: PaperSetup | None = None     # generated world when no file is given

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        if not self.values:
            raise ValueError("values must be nonempty")
        if any(int(v) < 1 for v in self.values):
            raise ValueError("values must be positive integers")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("values must be strictly increasing")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ValueError(f"schemes must be a nonempty subset of {SCHEMES}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: int
    scheme: str
    replication: int
    avg_power_w: float
    feasible: bool
    iterations: int

    def key(self):
        return (self.value, self.scheme, self.replication)


def replication_seed(seed: int, replication: int) -> int:
    return int(np.random.SeedSequence([seed, replication]).generate_state(1)[0])


def base_for(spec: SweepSpec, seed: int, replication: int) -> Scenario:
    """The world of one replication before the axis value is applied."""
    if spec.base_scenario is not None:
        return read_scenario(spec.base_scenario)
    setup = spec.setup or PaperSetup()
    if spec.axis == "slots_M":
        setup = replace(setup, slot_count=max(spec.values))
    return generate_paper_scenario(replication_seed(seed, replication), setup)


def cell_scenario(base: Scenario, axis: str, value: int) -> Scenario:
    # the M axis keeps the slot length and demands; more slots is a longer service
    if axis == "slots_M":
        return base.with_slots(value)
    return base.with_subcarriers(value)


def run_cell(spec: SweepSpec, value: int, scheme: str, replication: int, seed: int,
             config: SolverConfig) -> SweepRow:
    try:
        scenario = cell_scenario(base_for(spec, seed, replication), spec.axis, value)
        channel = build_channel_tensor(scenario)
        if scheme == "proposed":
            res = run_allocation(channel, scenario, config)
        elif scheme == "myopic":
            rng = np.random.default_rng(np.random.SeedSequence([seed, replication, value, 1]))
            res = run_myopic(channel, scenario, config, rng)
        else:
            res = run_equal_power(channel, scenario, config)
    except (ValueError, ArithmeticError):
        return SweepRow(spec.axis, value, scheme, replication, float("nan"), False, 0)
    return SweepRow(spec.axis, value, scheme, replication, res.avg_power, res.feasible,
                    res.iterations_used)


def _run_cell_args(args):
    return run_cell(*args)


def run_sweep(spec: SweepSpec, seed: int = 0, config: SolverConfig | None = None,
              jobs: int = 1) -> list[SweepRow]:
    """All cells of ``spec``, sorted by (value, scheme, replication)."""
    config = config or SolverConfig(seed=seed)
    if spec.base_scenario is not None and spec.axis == "slots_M":
        # a bad spec is an error of the whole sweep, not a failed cell
        M = read_scenario(spec.base_scenario).M
        if max(spec.values) > M:
            raise ValueError(f"slot count {max(spec.values)} exceeds the scenario's {M} slots")
    cells = [(spec, int(v), s, r, seed, config)
             for v in spec.values for s in spec.schemes for r in range(spec.replications)]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell_args, cells))
    else:
        rows = [run_cell(*c) for c in cells]
    return sorted(rows, key=SweepRow.key)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([r.axis, r.value, r.scheme, r.replication, f"{r.avg_power_w:.9g}",
                    "true" if r.feasible else "false", r.iterations])
    return buf.getvalue()


def mean_power(rows, scheme: str) -> dict[int, float]:
    """Average over replications of ``avg_power_w`` per axis value."""
    out: dict[int, list[float]] = {}
    for r in rows:
        if r.scheme == scheme:
            out.setdefault(r.value, []).append(r.avg_power_w)
    return {v: float(np.mean(p)) for v, p in sorted(out.items())}


def relative_gap(baseline: float, proposed: float) -> float:
    """Extra power of a baseline as a fraction of the proposed scheme's."""
    return (baseline - proposed) / proposed
