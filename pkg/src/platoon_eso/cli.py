"""Command-line entry point: simulate, verify, compare, report.

Exit status: 0 on success, 1 when a verdict fails (``verify`` always,
``simulate``/``report`` with ``--strict``), 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import analysis
from .scenario import ConfigError, build_scenario
from .simulation import SimulationDiverged, run
from .synthesis import InfeasibleDesign, verify_all

log = logging.getLogger("platoon_eso")

EXIT_OK, EXIT_VERDICT, EXIT_CONFIG = 0, 1, 2


def _scenario(args, **extra):
    return build_scenario(args.config, dt=getattr(args, "dt", None), horizon=getattr(args, "horizon", None),
                          seed=getattr(args, "seed", None), **extra)


def cmd_simulate(args) -> int:
    sc = _scenario(args, controller=args.controller)
    trace = run(sc)
    bounds = analysis.run_bounds(sc) if sc.controller == "dsc" else None
    analysis.export(trace, Path(args.out), bounds, charts=not args.no_charts)
    report = analysis.build_report(trace, bounds, window=args.window)
    print(report.to_text())
    print(f"# wrote {args.out}")
    return EXIT_VERDICT if args.strict and not report.passed else EXIT_OK


def cmd_verify(args) -> int:
    sc = _scenario(args)
    report = verify_all(sc.gains, sc.design_problem())
    print(report.to_text())
    return EXIT_OK if report.passed else EXIT_VERDICT


def cmd_compare(args) -> int:
    sc = _scenario(args)
    out = Path(args.out)
    traces = {}
    for ctl in ("dsc", "baseline"):
        traces[ctl] = run(sc.with_overrides(controller=ctl))
        bounds = analysis.run_bounds(sc) if ctl == "dsc" else None
        analysis.export(traces[ctl], out / ctl, bounds, charts=not args.no_charts)
    table = analysis.peak_table(traces["dsc"], traces["baseline"])
    (out / "peaks.txt").write_text(table + "\n")
    print(table)
    return EXIT_OK


def cmd_report(args) -> int:
    report = analysis.report_from_files(Path(args.trace), window=args.window)
    print(report.to_text())
    return EXIT_VERDICT if args.strict and not report.passed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="platoon-eso", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp, timing=True):
        sp.add_argument("--config", required=True,
                        help="YAML file or bundled config name (default, eps001, verified)")
        if timing:
            sp.add_argument("--dt", type=float)
            sp.add_argument("--horizon", type=float)
            sp.add_argument("--seed", type=int)

    s = sub.add_parser("simulate", help="run one scenario and export the trace")
    scenario_args(s)
    s.add_argument("--controller", choices=("dsc", "baseline"))
    s.add_argument("--out", required=True)
    s.add_argument("--window", type=float, default=2.0, help="terminal window for the precision verdict (s)")
    s.add_argument("--strict", action="store_true", help="exit 1 if any verdict fails")
    s.add_argument("--no-charts", action="store_true")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="check the design conditions for the configured gains")
    scenario_args(v, timing=False)
    v.add_argument("--seed", type=int)
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("compare", help="run both controllers and tabulate peak spacing errors")
    scenario_args(c)
    c.add_argument("--out", required=True)
    c.add_argument("--no-charts", action="store_true")
    c.set_defaults(func=cmd_compare)

    r = sub.add_parser("report", help="recompute verdicts from an exported trace")
    r.add_argument("--trace", required=True, help="trace.csv or the directory holding it")
    r.add_argument("--window", type=float, default=2.0)
    r.add_argument("--strict", action="store_true")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InfeasibleDesign, yaml.YAMLError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationDiverged, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
