"""Cumulative cost of dynamic clustering against the cluster cap and period.

    python scripts/sweep_ncl.py --caps 2 3 5 8 --periods 150 600 inf
"""

import argparse
import csv
import math
from pathlib import Path

from trough_dmpc.controller import run_closed_loop
from trough_dmpc.metrics import performance_report
from trough_dmpc.scenario import load_scenario

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default=str(ROOT / "scenarios" / "cloudy_10loop.toml"))
    ap.add_argument("--caps", type=int, nargs="+", default=[3, 5, 8])
    ap.add_argument("--periods", nargs="+", default=["150"])
    ap.add_argument("--duration", type=float, default=None, help="truncate the scenario (s)")
    ap.add_argument("--out", default="results/sweep_ncl.csv")
    args = ap.parse_args()

    cfg = load_scenario(args.scenario)
    rows = []
    for period in args.periods:
        dt_cl = math.inf if period == "inf" else float(period)
        for cap in args.caps:
            rep = performance_report(run_closed_loop(cfg, "dynamic", n_cl_max=cap, dt_cluster=dt_cl,
                                                     duration=args.duration))
            rows.append(dict(n_cl_max=cap, dt_cluster=period, j_cum=rep.j_cum, e_bar=rep.e_bar,
                             mean_cluster_size=rep.mean_cluster_size, tau_sum=rep.tau_sum,
                             mean_iterations=rep.mean_iterations))
            print(", ".join(f"{k}={v:.5g}" if isinstance(v, float) else f"{k}={v}" for k, v in rows[-1].items()))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
