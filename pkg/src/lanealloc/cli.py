"""Command-line front end.

    lanealloc simulate  --scenario world.yaml --out run/
    lanealloc sweep     --axis subcarriers_N --values 5,10,15,20 --schemes proposed,equal_power
    lanealloc verify    theorem1
    lanealloc verify-rate --antennas 16
    lanealloc generate  paper --seed 3 --out world.yaml

Exit codes: 0 ok, 1 error, 2 infeasible allocation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .baselines import run_equal_power, run_myopic
from .channel import build_channel_tensor
from .generate import PaperSetup, generate_paper_scenario
from .rate import FixedPointError
from .scenario import Scenario, dump_scenario, read_scenario, write_scenario
from .solver import SolverConfig, result_summary, run_allocation, write_allocation_csv
from .sweep import AXES, SCHEMES, SweepSpec, rows_to_csv, run_sweep
from .verify import SUITES, rate_table, run_suite

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1: exit code 2 is reserved for infeasible runs
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _name_list(choices):
    def parse(text: str) -> tuple[str, ...]:
        names = tuple(v.strip() for v in text.split(",") if v.strip())
        bad = [n for n in names if n not in choices]
        if bad or not names:
            raise argparse.ArgumentTypeError(f"choose from {', '.join(choices)}")
        return names
    return parse


def _setup_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("generated world (with --generate paper)")
    g.add_argument("--users", type=int, help="number of ships")
    g.add_argument("--slots", type=int, help="number of slots M")
    g.add_argument("--subcarriers", type=int, help="number of subcarriers N")
    g.add_argument("--demand-min", type=float, help="lower demand bound, bits")
    g.add_argument("--demand-max", type=float, help="upper demand bound, bits")


def _common(p: argparse.ArgumentParser, scenario: bool = True, solver: bool = True):
    if scenario:
        src = p.add_mutually_exclusive_group()
        src.add_argument("--scenario", metavar="PATH", help="scenario file")
        src.add_argument("--generate", choices=["paper"],
                         help="synthesize the 3-BS, 90-ship world instead of reading a file")
        _setup_args(p)
    p.add_argument("--seed", type=int, default=0, help="seed for every random draw (default 0)")
    p.add_argument("--out", metavar="PATH", help="output path")
    if solver:
        p.add_argument("--max-iter", type=int, help="iteration cap of the dual loop")
        p.add_argument("--tol", type=float, help="stopping tolerance (relative duality gap)")
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="lanealloc", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version="%(prog)s 0.1.0")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run one allocation")
    _common(p)
    p.add_argument("--scheme", choices=SCHEMES, default="proposed")

    p = sub.add_parser("sweep", help="sweep M or N and write one CSV row per cell")
    _common(p)
    p.add_argument("--axis", choices=AXES, required=True)
    p.add_argument("--values", type=_int_list, required=True, help="e.g. 50,100,150")
    p.add_argument("--schemes", type=_name_list(SCHEMES), default=("proposed",),
                   help="comma-separated subset of " + ",".join(SCHEMES))
    p.add_argument("--replications", type=int, default=1)

    p = sub.add_parser("verify", help="run a self-check suite and print a JSON report")
    p.add_argument("suite", choices=SUITES)
    _common(p, scenario=False, solver=False)

    p = sub.add_parser("verify-rate", help="deterministic equivalent vs Monte Carlo, as CSV")
    _common(p, scenario=False, solver=False)
    p.add_argument("--antennas", type=int, default=16)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--snr-db", type=_int_list, default=tuple(range(-10, 31, 5)),
                   help="SNR grid in dB (default -10,-5,...,30)")

    p = sub.add_parser("generate", help="write a synthesized scenario file")
    p.add_argument("kind", choices=["paper"])
    _common(p, scenario=False, solver=False)
    _setup_args(p)
    return ap


def _paper_setup(args) -> PaperSetup:
    setup = PaperSetup()
    for name, attr in (("users", "n_users"), ("slots", "slot_count"),
                        ("subcarriers", "subcarrier_count"), ("demand_min", "demand_min"),
                        ("demand_max", "demand_max")):
        v = getattr(args, name, None)
        if v is not None:
            setup = replace(setup, **{attr: v})
    if setup.demand_min > setup.demand_max or setup.demand_min < 0:
        raise CliError("need 0 <= --demand-min <= --demand-max")
    return setup


def _scenario(args) -> Scenario:
    if args.scenario:
        return read_scenario(args.scenario)
    if args.generate:
        return generate_paper_scenario(args.seed, _paper_setup(args))
    raise CliError("give --scenario PATH or --generate paper")


def _config(args) -> SolverConfig:
    kw = {"seed": args.seed}
    if args.max_iter is not None:
        kw["max_iterations"] = args.max_iter
    if args.tol is not None:
        kw["gap_tol"] = args.tol
    return SolverConfig(**kw)


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_simulate(args) -> int:
    scenario = _scenario(args)
    config = _config(args)
    channel = build_channel_tensor(scenario)
    if args.scheme == "proposed":
        res = run_allocation(channel, scenario, config)
    elif args.scheme == "myopic":
        res = run_myopic(channel, scenario, config, np.random.default_rng(args.seed))
    else:
        res = run_equal_power(channel, scenario, config)
    summary = {"scheme": args.scheme, **result_summary(res)}
    text = json.dumps(summary, indent=2) + "\n"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "summary.json"), "w", encoding="utf-8") as fh:
            fh.write(text)
        with open(os.path.join(args.out, "allocation.csv"), "w", encoding="utf-8",
                  newline="") as fh:
            write_allocation_csv(res, fh)
    print(f"avg_power_w {summary['avg_power_w']:.9g}  feasible {str(res.feasible).lower()}  "
          f"iterations {res.iterations_used}")
    if not res.feasible:
        table = res.deficit_table()
        print("user  window  missing_bits", file=sys.stderr)
        for k, w, b in table:
            print(f"{k:4d}  {w:6d}  {b:.6g}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.generate is None and args.scenario is None:
        raise CliError("give --scenario PATH or --generate paper")
    setup = _paper_setup(args) if args.generate else None
    spec = SweepSpec(args.axis, args.values, args.schemes, args.replications, args.scenario,
                     setup)
    rows = run_sweep(spec, seed=args.seed, config=_config(args), jobs=args.jobs)
    _emit(rows_to_csv(rows), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    report = run_suite(args.suite, seed=args.seed).as_dict()
    text = json.dumps(report, indent=2) + "\n"
    _emit(text, args.out)
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: observed {c['observed']:.3g}"
              f" (tolerance {c['tolerance']:.3g})", file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_ERROR


def cmd_verify_rate(args) -> int:
    rows = rate_table(args.antennas, args.snr_db, args.samples, args.seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("snr_db", "rate_de", "rate_mc", "mc_stderr", "rel_err"))
    for row in rows:
        w.writerow([f"{v:.9g}" for v in row])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_generate(args) -> int:
    scenario = generate_paper_scenario(args.seed, _paper_setup(args))
    if args.out:
        write_scenario(scenario, args.out)
    else:
        sys.stdout.write(dump_scenario(scenario))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "verify": cmd_verify,
            "verify-rate": cmd_verify_rate, "generate": cmd_generate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (CliError, OSError, ValueError, FixedPointError, ArithmeticError) as exc:
        print(f"lanealloc: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
