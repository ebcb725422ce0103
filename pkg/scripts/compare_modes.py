"""Cost and cluster-size table for fine, dynamic and coarse control.

    python scripts/compare_modes.py [--scenario scenarios/cloudy_10loop.toml] [--out results/modes]
"""

import argparse
import time
from pathlib import Path

from trough_dmpc.controller import run_closed_loop
from trough_dmpc.metrics import performance_report, plot_timing, write_log, write_report_csv
from trough_dmpc.scenario import load_scenario

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default=str(ROOT / "scenarios" / "cloudy_10loop.toml"))
    ap.add_argument("--out", default="results/modes")
    ap.add_argument("--ncl-max", type=int, default=None)
    args = ap.parse_args()

    cfg = load_scenario(args.scenario)
    out = Path(args.out)
    reports = []
    for mode in ("fine", "dynamic", "coarse"):
        t0 = time.perf_counter()
        log = run_closed_loop(cfg, mode, n_cl_max=args.ncl_max)
        wall = time.perf_counter() - t0
        rep = performance_report(log)
        write_log(log, out / mode)
        reports.append(rep)
        print(f"{mode:<8} J_cum={rep.j_cum:12.5g}  e_bar={rep.e_bar:7.3f}  "
              f"cluster size={rep.mean_cluster_size:5.2f}  iterations={rep.mean_iterations:4.2f}  {wall:6.1f} s")
    write_report_csv(reports, out / "report.csv")
    plot_timing(reports, out / "timing.svg")


if __name__ == "__main__":
    main()
