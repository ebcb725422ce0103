"""Performance and timing indices over a closed-loop log, and log I/O.

Floats are written with ``repr`` so a reloaded log gives bit-identical
reports.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .controller import ControlRecord, SimulationLog


def cumulative_cost(log: SimulationLog, w_e: float | None = None, w_q: float | None = None) -> float:
    """Sum over all simulated instants and loops of w_e*e^2 + w_q*q^2."""
    w_e = log.meta.get("w_e", 1e-3) if w_e is None else w_e
    w_q = log.meta.get("w_q", 1.0) if w_q is None else w_q
    e = log.t_out - log.t_ref[:, None]
    return float(w_e * np.sum(e * e) + w_q * np.sum(log.q * log.q))


def max_tracking_error(log: SimulationLog, warmup: float | None = None) -> float:
    """Largest |T_out - T_ref| over loops and instants with t >= warmup."""
    warmup = log.meta.get("warmup", 300.0) if warmup is None else warmup
    keep = log.t >= warmup
    if not keep.any():
        return 0.0
    e = np.abs(log.t_out[keep] - log.t_ref[keep, None])
    return float(e.max())


def timing_summary(log: SimulationLog) -> tuple[float, float, float]:
    """Mean per control step of summed NLP time, QP time, and NLP+QP+sensitivity."""
    if not log.control:
        raise ValueError("log has no control steps")
    nlp = np.array([sum(r.t_nlp) for r in log.control])
    qp = np.array([r.t_qp for r in log.control])
    sens = np.array([sum(r.t_sens) for r in log.control])
    return float(nlp.mean()), float(qp.mean()), float(nlp.mean() + qp.mean() + sens.mean())


def mean_cluster_size(log: SimulationLog) -> float:
    """Average over control steps of loops per cluster."""
    if not log.control:
        return float(log.n_loops)
    return float(np.mean([log.n_loops / r.n_clusters for r in log.control]))


@dataclass
class PerformanceReport:
    mode: str
    j_cum: float
    e_bar: float
    mean_cluster_size: float
    tau_nlp: float
    tau_qp: float
    tau_sum: float
    mean_iterations: float
    max_iterations: int
    control_steps: int
    failed_steps: int
    kkt_failures: int

    def as_row(self) -> dict:
        return asdict(self)


def performance_report(log: SimulationLog) -> PerformanceReport:
    nlp, qp, total = timing_summary(log) if log.control else (0.0, 0.0, 0.0)
    its = [r.iterations for r in log.control]
    return PerformanceReport(
        mode=str(log.meta.get("mode", "")),
        j_cum=cumulative_cost(log),
        e_bar=max_tracking_error(log),
        mean_cluster_size=mean_cluster_size(log),
        tau_nlp=nlp,
        tau_qp=qp,
        tau_sum=total,
        mean_iterations=float(np.mean(its)) if its else 0.0,
        max_iterations=int(max(its, default=0)),
        control_steps=len(log.control),
        failed_steps=sum(r.failed for r in log.control),
        kkt_failures=sum(not r.kkt_ok for r in log.control),
    )


# ---------------------------------------------------------------------------
# files

def _fmt(v) -> str:
    return repr(float(v))


def write_log(log: SimulationLog, out_dir) -> None:
    """log.csv (one row per simulation step), control.csv and meta.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = log.n_loops
    head = ["t", "t_in", "t_mix", "t_ambient", "t_ref", "stage_cost"]
    head += [f"t_out_{i + 1}" for i in range(n)] + [f"q_{i + 1}" for i in range(n)]
    head += [f"irr_{i + 1}" for i in range(n)] + [f"cluster_{i + 1}" for i in range(n)]
    with open(out / "log.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(head)
        for k in range(log.t.size):
            row = [_fmt(log.t[k]), _fmt(log.t_in[k]), _fmt(log.t_mix[k]), _fmt(log.t_ambient[k]),
                   _fmt(log.t_ref[k]), _fmt(log.stage_cost[k])]
            row += [_fmt(v) for v in log.t_out[k]] + [_fmt(v) for v in log.q[k]]
            row += [_fmt(v) for v in log.irradiance[k]] + [str(int(v)) for v in log.cluster[k]]
            w.writerow(row)
    with open(out / "control.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "n_clusters", "iterations", "converged", "failed", "coupling_residual",
                    "kkt_ok", "stationarity", "t_nlp", "t_sens", "t_qp"])
        for r in log.control:
            w.writerow([r.k, r.n_clusters, r.iterations, int(r.converged), int(r.failed),
                        _fmt(r.coupling_residual), int(r.kkt_ok), _fmt(r.stationarity),
                        ";".join(_fmt(v) for v in r.t_nlp), ";".join(_fmt(v) for v in r.t_sens),
                        _fmt(r.t_qp)])
    meta = dict(log.meta)
    meta["partitions"] = log.partitions
    with open(out / "meta.json", "w") as fh:
        json.dump(_jsonable(meta), fh, indent=2)


def read_log(out_dir) -> SimulationLog:
    out = Path(out_dir)
    with open(out / "log.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    n = sum(h.startswith("t_out_") for h in head)
    data = np.array([[float(v) for v in r[:6 + 3 * n]] for r in body]).reshape(len(body), 6 + 3 * n)
    cluster = np.array([[int(v) for v in r[6 + 3 * n:]] for r in body], dtype=int).reshape(len(body), n)
    control = []
    with open(out / "control.csv", newline="") as fh:
        reader = csv.DictReader(fh)
        for r in reader:
            control.append(ControlRecord(
                k=int(r["k"]),
                n_clusters=int(r["n_clusters"]),
                iterations=int(r["iterations"]),
                converged=bool(int(r["converged"])),
                failed=bool(int(r["failed"])),
                coupling_residual=float(r["coupling_residual"]),
                kkt_ok=bool(int(r["kkt_ok"])),
                stationarity=float(r["stationarity"]),
                t_nlp=[float(v) for v in r["t_nlp"].split(";") if v],
                t_sens=[float(v) for v in r["t_sens"].split(";") if v],
                t_qp=float(r["t_qp"]),
            ))
    with open(out / "meta.json") as fh:
        meta = json.load(fh)
    partitions = meta.pop("partitions", [])
    return SimulationLog(
        t=data[:, 0],
        t_in=data[:, 1],
        t_mix=data[:, 2],
        t_ambient=data[:, 3],
        t_ref=data[:, 4],
        stage_cost=data[:, 5],
        t_out=data[:, 6:6 + n],
        q=data[:, 6 + n:6 + 2 * n],
        irradiance=data[:, 6 + 2 * n:6 + 3 * n],
        cluster=cluster,
        partitions=partitions,
        control=control,
        meta=meta,
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_summary(report: PerformanceReport, out_dir, extra: dict | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = report.as_row()
    if extra:
        doc.update(extra)
    with open(out / "summary.json", "w") as fh:
        json.dump(_jsonable(doc), fh, indent=2)


def write_report_csv(reports: list[PerformanceReport], path) -> None:
    """One row per run: the comparison table."""
    rows = [r.as_row() for r in reports]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["mode"])
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


# ---------------------------------------------------------------------------
# plots

_PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def _polyline(xs, ys, x0, x1, y0, y1, box, color, width=1.0):
    left, top, w, h = box
    sx = w / (x1 - x0) if x1 > x0 else 0.0
    sy = h / (y1 - y0) if y1 > y0 else 0.0
    pts = " ".join(f"{left + (x - x0) * sx:.1f},{top + h - (y - y0) * sy:.1f}" for x, y in zip(xs, ys))
    return f'<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{pts}"/>'


def _panel(series, box, title, ylabel, t_hours):
    left, top, w, h = box
    ys = np.concatenate([np.asarray(s) for s, _ in series])
    y0, y1 = float(ys.min()), float(ys.max())
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 1.0, y1 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    x0, x1 = float(t_hours[0]), float(t_hours[-1])
    parts = [
        f'<rect x="{left}" y="{top}" width="{w}" height="{h}" fill="none" stroke="#444"/>',
        f'<text x="{left + w / 2}" y="{top - 8}" text-anchor="middle" font-size="13">{title}</text>',
        f'<text x="{left - 45}" y="{top + h / 2}" font-size="11" '
        f'transform="rotate(-90 {left - 45} {top + h / 2})" text-anchor="middle">{ylabel}</text>',
        f'<text x="{left - 5}" y="{top + 4}" font-size="10" text-anchor="end">{y1:.3g}</text>',
        f'<text x="{left - 5}" y="{top + h}" font-size="10" text-anchor="end">{y0:.3g}</text>',
        f'<text x="{left}" y="{top + h + 14}" font-size="10">{x0:.2g} h</text>',
        f'<text x="{left + w}" y="{top + h + 14}" font-size="10" text-anchor="end">{x1:.3g} h</text>',
    ]
    for s, color in series:
        parts.append(_polyline(t_hours, s, x0, x1, y0, y1, box, color))
    return parts


def _decimate(log: SimulationLog, max_points: int = 1500):
    step = max(1, log.t.size // max_points)
    return slice(None, None, step)


def plot_trajectories(log: SimulationLog, path) -> None:
    """Outlet temperatures against the reference, and loop flows in l/s."""
    sl = _decimate(log)
    th = log.t[sl] / 3600.0
    n = log.n_loops
    temps = [(log.t_out[sl, i], _PALETTE[i % 10]) for i in range(n)] + [(log.t_ref[sl], "#000")]
    flows = [(1e3 * log.q[sl, i], _PALETTE[i % 10]) for i in range(n)]
    parts = _panel(temps, (70, 40, 820, 260), "Outlet temperature", "deg C", th)
    parts += _panel(flows, (70, 370, 820, 260), "Loop flow", "l/s", th)
    _write_svg(path, 960, 680, parts)


def plot_timing(reports: list[PerformanceReport], path) -> None:
    """Bars of mean NLP, QP and total time per control step for each run."""
    width, height = 120 + 160 * max(len(reports), 1), 360
    top, base = 40, 300
    vmax = max([r.tau_sum for r in reports] + [1e-9])
    parts = [f'<text x="{width / 2}" y="24" text-anchor="middle" font-size="13">Mean time per control step</text>',
             f'<line x1="60" y1="{base}" x2="{width - 20}" y2="{base}" stroke="#444"/>']
    labels = (("NLP", "tau_nlp", "#1f77b4"), ("QP", "tau_qp", "#ff7f0e"), ("total", "tau_sum", "#2ca02c"))
    for j, rep in enumerate(reports):
        x = 80 + 160 * j
        for b, (name, attr, color) in enumerate(labels):
            v = getattr(rep, attr)
            hgt = (base - top) * v / vmax
            parts.append(f'<rect x="{x + 40 * b}" y="{base - hgt:.1f}" width="34" height="{hgt:.1f}" fill="{color}"/>')
            parts.append(f'<text x="{x + 40 * b + 17}" y="{base - hgt - 4:.1f}" font-size="9" '
                         f'text-anchor="middle">{v * 1e3:.3g} ms</text>')
        parts.append(f'<text x="{x + 60}" y="{base + 18}" font-size="11" text-anchor="middle">{rep.mode}</text>')
    for b, (name, _, color) in enumerate(labels):
        parts.append(f'<rect x="{width - 110}" y="{40 + 16 * b}" width="10" height="10" fill="{color}"/>')
        parts.append(f'<text x="{width - 95}" y="{49 + 16 * b}" font-size="10">{name}</text>')
    _write_svg(path, width, height, parts)


def _write_svg(path, width, height, parts):
    body = "\n".join(parts)
    Path(path).write_text(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif">\n<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n'
    )
