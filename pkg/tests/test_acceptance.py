"""Acceptance suite: one verdict line per criterion, printed in the run summary.

The closed-loop criteria share full 7 h runs of the shipped cloudy scenario
through the session cache in conftest.py.
"""

import dataclasses
import time

import numpy as np
import pytest

from conftest import record_criterion
from oracles import monolithic_qp, quadratic_agent, random_boundary, random_quadratic_instance
from trough_dmpc.aladin import AladinConfig, aladin_solve
from trough_dmpc.controller import (
    FLOW_SCALE,
    ClusterObjective,
    ControllerSettings,
    build_cluster_subproblem,
    centralized_reference_solve,
    certify,
    run_closed_loop,
    sink_subproblem,
)
from trough_dmpc.metrics import cumulative_cost, mean_cluster_size
from trough_dmpc.partitioning import Partition, calinski_harabasz, select_partition
from trough_dmpc.plant import LoopParams, htf_properties, inlet_step, mixed_outlet, steady_state_flow
from trough_dmpc.solvers import fd_gradient, fd_jacobian

pytestmark = pytest.mark.slow

TABLE_RUNS = [("fine", None), ("dynamic", 5), ("coarse", None)]
TREND = (3, 5, 8)


def all_runs(full_runs):
    keys = TABLE_RUNS + [("dynamic", k) for k in TREND if k != 5]
    return {key: full_runs.get(*key) for key in keys}


def test_c1_aladin_oracle_equivalence():
    t0 = time.perf_counter()
    qp_err = 0.0
    qp_ok = True
    for seed in range(20):
        data, q_total = random_quadratic_instance(1000 + seed)
        res = aladin_solve([quadratic_agent(*d) for d in data], q_total, AladinConfig(epsilon=1e-9))
        qp_ok &= res.converged
        qp_err = max(qp_err, float(np.abs(np.array(res.q) - monolithic_qp(data, q_total)).max()))
    nlp_err = 0.0
    rng = np.random.default_rng(2024)
    s = ControllerSettings(horizon=3)
    for _ in range(5):
        bs = [random_boundary(rng, 3, settings=s) for _ in range(3)]
        ref = centralized_reference_solve(bs, s)
        subs = [build_cluster_subproblem(b, s) for b in bs] + [sink_subproblem(3)]
        res = aladin_solve(subs, s.q_total * FLOW_SCALE, s.aladin)
        qp_ok &= res.converged and ref.status == "success"
        f = sum(sp.objective(x)[0] for sp, x in zip(subs[:-1], res.q))
        nlp_err = max(nlp_err, abs(f - ref.objective) / abs(ref.objective))
    elapsed = time.perf_counter() - t0
    ok = qp_ok and qp_err <= 1e-6 and nlp_err <= 1e-4 and elapsed < 10.0
    record_criterion(1, ok, f"QP max err {qp_err:.1e} (<=1e-6), cluster-MPC rel obj err {nlp_err:.1e} "
                            f"(<=1e-4), {elapsed:.2f} s (<10 s)")
    assert ok


def test_c2_kkt_certification(full_runs):
    steps = bad = 0
    for (mode, k), (log, _) in all_runs(full_runs).items():
        steps += len(log.control)
        bad += sum(not (r.converged and r.kkt_ok) for r in log.control)
    ok = bad == 0 and steps > 0
    record_criterion(2, ok, f"{steps - bad}/{steps} control steps converged and certified over {len(TREND) + 2} runs")
    assert ok


def test_c3_feasibility(full_runs):
    cfg = full_runs.cfg
    worst_sum = 0.0
    lo, hi = np.inf, -np.inf
    for log, _ in all_runs(full_runs).values():
        worst_sum = max(worst_sum, float(log.q.sum(axis=1).max()))
        lo, hi = min(lo, float(log.q.min())), max(hi, float(log.q.max()))
    ok = lo >= 0.2e-3 and hi <= 2e-3 and worst_sum <= 9e-3 + 1e-9
    assert (cfg.q_min, cfg.q_max, cfg.q_total) == (0.2e-3, 2e-3, 9e-3)
    record_criterion(3, ok, f"q in [{lo:.6g}, {hi:.6g}] m3/s, max sum {worst_sum:.12g} (<= 9e-3 + 1e-9)")
    assert ok


def test_c4_partition_extremes(full_runs):
    cfg = dataclasses.replace(full_runs.cfg, duration=1800.0)
    coarse = run_closed_loop(cfg, "coarse")
    one = run_closed_loop(cfg, "dynamic", n_cl_max=1)
    fine = run_closed_loop(cfg, "fine")
    frozen = run_closed_loop(cfg, "frozen", partition=Partition.singletons(cfg.n_loops))
    ok_c = np.array_equal(coarse.q, one.q) and np.array_equal(coarse.t_out, one.t_out)
    ok_f = np.array_equal(fine.q, frozen.q) and np.array_equal(fine.t_out, frozen.t_out)
    record_criterion(4, ok_c and ok_f, f"dynamic(1) == coarse: {ok_c}; frozen singletons == fine: {ok_f} "
                                       f"(bit-exact, {cfg.duration:.0f} s)")
    assert ok_c and ok_f


def test_c5_table_ordering(full_runs):
    (fine, _), (dyn, _), (coarse, _) = (full_runs.get(*key) for key in TABLE_RUNS)
    jf, jd, jc = cumulative_cost(fine), cumulative_cost(dyn), cumulative_cost(coarse)
    size = mean_cluster_size(dyn)
    ok = jf <= jd <= jc and jc >= 5 * jf and 1 < size < 10
    record_criterion(5, ok, f"J fine {jf:.4g} <= dynamic {jd:.4g} <= coarse {jc:.4g}; coarse/fine {jc / jf:.0f}x "
                            f"(>=5x); mean cluster size {size:.2f} in (1, 10)")
    assert ok


def test_c6_monotone_trend(full_runs):
    J = [cumulative_cost(full_runs.get("dynamic", k)[0]) for k in TREND]
    ok = all(b <= 1.05 * a for a, b in zip(J, J[1:]))
    record_criterion(6, ok, "J_cum for N_cl_max " + ", ".join(f"{k}: {j:.4g}" for k, j in zip(TREND, J))
                     + " (non-increasing within 5%)")
    assert ok


def test_c7_physics_examples():
    p = LoopParams(eta=0.6, A=5.067e-4, L=142.0, S=267.4)
    pr = htf_properties(200.0, 25.0, p)
    checks = {
        "rho(200)": abs(pr.rho - 768.6) <= 1e-9,
        "c(200)": abs(pr.c - 2515.6) <= 1e-9,
        "P(200)": abs(pr.P / 1.93349e6 - 1) <= 1e-5,
        "C(200)": abs(pr.C / 1.39117e5 - 1) <= 1e-5,
        "h(200,25)": abs(pr.h_loss - 17521.0) <= 0.1,
        "steady q": abs(steady_state_flow(230.0, 170.0, 25.0, 0.6 * 267.4 * 800.0, p.volume, p.S) / 9.553e-4 - 1)
        <= 1e-3,
        "inlet fixed point": inlet_step(170.0, 250.0, 0.5) == 170.0,
        "mixing equal": abs(mixed_outlet([240.0, 260.0], [1e-3, 1e-3]) - 250.0) <= 1e-12,
        "mixing weighted": abs(mixed_outlet([240.0, 260.0], [1e-3, 3e-3]) - 255.0) <= 1e-12,
        "CH toy": abs(calinski_harabasz(np.array([[0.0, 0], [0, 1], [10, 10], [10, 11]]), [0, 0, 1, 1]) - 400.0)
        <= 1e-9,
    }
    failed = [k for k, v in checks.items() if not v]
    record_criterion(7, not failed, f"{len(checks) - len(failed)}/{len(checks)} physics examples"
                                    + (f"; failed: {failed}" if failed else ""))
    assert not failed


def test_c8_clustering_recovery():
    hits = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        pts = np.vstack([c + rng.standard_normal((20, 2)) for c in [(0.0, 0.0), (100.0, 0.0), (0.0, 100.0)]])
        truth = Partition.from_labels(np.repeat([0, 1, 2], 20))
        p = select_partition(pts, 8, seed=seed)
        hits += p.clusters == truth.clusters
    record_criterion(8, hits == 50, f"{hits}/50 seeds recover the three planted blobs with k = 3")
    assert hits == 50


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def test_c9_gradient_checks():
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(100):
        horizon = int(rng.integers(1, 6))
        s = ControllerSettings(horizon=horizon)
        b = random_boundary(rng, horizon, size=int(rng.integers(1, 5)), settings=s)
        sub = build_cluster_subproblem(b, s)
        x = np.concatenate([rng.uniform(sub.lb[:horizon], sub.ub[:horizon]), rng.uniform(0, 3, horizon)])
        worst = max(worst, _rel(sub.objective(x)[1], fd_gradient(lambda z: sub.objective(z)[0], x)))
        worst = max(worst, _rel(sub.constraints(x)[1], fd_jacobian(lambda z: sub.constraints(z)[0], x)))
        ob = ClusterObjective(b, s)
        worst = max(worst, _rel(ob.band(x[:horizon])[1], fd_jacobian(lambda u: ob.band(u)[0], x[:horizon])))
        sink = sink_subproblem(horizon)
        u = rng.uniform(0, 9, horizon)
        worst = max(worst, _rel(sink.objective(u)[1], fd_gradient(lambda z: sink.objective(z)[0], u)))
    record_criterion(9, worst <= 1e-5, f"worst relative gradient/Jacobian error {worst:.1e} over 100 points (<=1e-5)")
    assert worst <= 1e-5


def test_c10_runtime(full_runs):
    lines = []
    ok = True
    for key in TABLE_RUNS:
        log, wall = full_runs.get(*key)
        its = np.mean([r.iterations for r in log.control])
        ok &= wall < 300.0 and its <= 50 and len(log.control) == 840 and log.t.size == 50400
        lines.append(f"{key[0]}{'' if key[1] is None else key[1]} {wall:.1f} s / {its:.2f} it")
    record_criterion(10, ok, "; ".join(lines) + " (<300 s, <=50 it, 840 control steps)")
    assert ok
