"""Command-line front end: run one controller, compare several, self-test."""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

from .controller import MODES, run_closed_loop
from .metrics import (
    performance_report,
    plot_timing,
    plot_trajectories,
    write_log,
    write_report_csv,
    write_summary,
)
from .scenario import ScenarioError, load_scenario

log = logging.getLogger("trough_dmpc")

EXIT_OK = 0
EXIT_SOLVER = 2
EXIT_INPUT = 3

RUN_MODES = tuple(m for m in MODES if m != "frozen")


def _dt_cluster(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return math.inf
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("dt-cluster must be positive")
    return value


def _label(mode: str, n_cl_max: int | None) -> str:
    return f"dynamic-{n_cl_max}" if mode == "dynamic" and n_cl_max is not None else mode


def _execute(cfg, mode, n_cl_max, dt_cluster, seed, out: Path, label: str | None = None):
    t0 = time.perf_counter()
    sim = run_closed_loop(cfg, mode, n_cl_max=n_cl_max, dt_cluster=dt_cluster, seed=seed)
    wall = time.perf_counter() - t0
    report = performance_report(sim)
    report.mode = label or report.mode
    write_log(sim, out)
    write_summary(report, out, extra=dict(wall_time=wall, scenario_seed=cfg.seed))
    write_report_csv([report], out / "report.csv")
    plot_trajectories(sim, out / "trajectories.svg")
    plot_timing([report], out / "timing.svg")
    log.info("%s: J_cum=%.4g e_bar=%.3g mean cluster size=%.3g (%.1f s)",
             report.mode, report.j_cum, report.e_bar, report.mean_cluster_size, wall)
    return report


def cmd_run(args) -> int:
    cfg = load_scenario(args.scenario)
    report = _execute(cfg, args.mode, args.ncl_max, args.dt_cluster, args.seed, Path(args.out))
    print(f"J_cum={report.j_cum:.6g} e_bar={report.e_bar:.4g} mean_cluster_size={report.mean_cluster_size:.4g} "
          f"iterations={report.mean_iterations:.3g}")
    if report.failed_steps:
        print(f"error: ALADIN did not converge at {report.failed_steps} control step(s); "
              f"previous flows were held", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = load_scenario(args.scenario)
    out = Path(args.out)
    reports = []
    for spec in args.modes:
        mode, _, k = spec.partition(":")
        if mode not in RUN_MODES:
            raise ScenarioError(f"unknown mode {mode!r}; expected one of {RUN_MODES}")
        n_cl_max = int(k) if k else (args.ncl_max if mode == "dynamic" else None)
        label = _label(mode, n_cl_max)
        reports.append(_execute(cfg, mode, n_cl_max, args.dt_cluster, args.seed, out / label, label))
    write_report_csv(reports, out / "report.csv")
    plot_timing(reports, out / "timing.svg")
    print(f"{'mode':<12}{'J_cum':>14}{'e_bar':>10}{'cluster size':>14}")
    for r in reports:
        print(f"{r.mode:<12}{r.j_cum:>14.6g}{r.e_bar:>10.4g}{r.mean_cluster_size:>14.4g}")
    return EXIT_SOLVER if any(r.failed_steps for r in reports) else EXIT_OK


def cmd_selftest(args) -> int:
    try:
        import pytest
    except ImportError:
        print("error: selftest needs pytest (pip install .[test])", file=sys.stderr)
        return EXIT_INPUT
    tests = Path(__file__).resolve().parents[2] / "tests"
    if not tests.is_dir():
        print(f"error: test directory {tests} not found", file=sys.stderr)
        return EXIT_INPUT
    opts = [str(tests), "-q", "-m", "not slow"] if not args.full else [str(tests), "-q"]
    return int(pytest.main(opts))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trough-dmpc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one controller configuration")
    r.add_argument("--scenario", required=True)
    r.add_argument("--mode", choices=RUN_MODES, default="dynamic")
    r.add_argument("--ncl-max", type=int, default=None)
    r.add_argument("--dt-cluster", type=_dt_cluster, default=None)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="run several modes and tabulate them")
    c.add_argument("--scenario", required=True)
    c.add_argument("--modes", nargs="+", default=["fine", "dynamic", "coarse"],
                   help="modes; dynamic:K sets N_cl_max=K for that run")
    c.add_argument("--ncl-max", type=int, default=None)
    c.add_argument("--dt-cluster", type=_dt_cluster, default=None)
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("selftest", help="run the oracle and property test suites")
    s.add_argument("--full", action="store_true", help="include the slow closed-loop tests")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
