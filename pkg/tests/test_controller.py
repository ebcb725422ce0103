import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import random_boundary
from trough_dmpc.aladin import AladinConfig, aladin_solve
from trough_dmpc.controller import (
    FLOW_SCALE,
    ClusterBoundary,
    ClusterObjective,
    ControllerSettings,
    SoftBandAgent,
    allocate_flows,
    build_cluster_subproblem,
    centralized_reference_solve,
    certify,
    cluster_cost,
    predict_outlet_sequence,
    repair_flows,
    run_closed_loop,
    sink_subproblem,
)
from trough_dmpc.partitioning import Partition
from trough_dmpc.plant import LoopParams, LoopState, euler_step, loop_step, lump_cluster, steady_state_flow
from trough_dmpc.scenario import IrradianceSpec, ScenarioConfig
from trough_dmpc.solvers import NlpProblem, fd_gradient, fd_jacobian, solve_nlp

P0 = LoopParams(eta=0.6, A=5.067e-4, L=142.0, S=267.4)


def boundary(t0=230.0, irr=800.0, t_in=170.0, t_amb=25.0, horizon=5, size=1, t_ref=250.0):
    return ClusterBoundary(t0=t0, power=size * P0.eta * P0.S * irr, t_in=t_in, t_ambient=t_amb,
                           t_ref=np.full(horizon, t_ref), size=size,
                           volume=size * P0.volume, surface=size * P0.S)


# --- prediction ---------------------------------------------------------------

def test_prediction_steady_state():
    b = boundary()
    q = steady_state_flow(230.0, 170.0, 25.0, b.power, b.volume, b.surface)
    assert q == pytest.approx(9.553e-4, rel=1e-3)
    T = predict_outlet_sequence(b, np.full(5, q), ControllerSettings())
    assert np.allclose(T, 230.0, atol=1e-3)


def test_prediction_single_step_matches_plant():
    b = boundary(horizon=1)
    T = predict_outlet_sequence(b, [1e-3], ControllerSettings())
    ref = loop_step(LoopState(230.0, 1e-3), P0, 170.0, 800.0, 25.0, 30.0)
    assert T[0] == pytest.approx(ref, rel=1e-12)


def test_prediction_cools_without_sun():
    b = boundary(irr=0.0)
    T = predict_outlet_sequence(b, np.full(5, 2e-3), ControllerSettings())
    assert np.all(np.diff(np.concatenate([[230.0], T])) < 0)


def test_prediction_length_checked():
    with pytest.raises(ValueError):
        predict_outlet_sequence(boundary(), np.ones(3) * 1e-3, ControllerSettings())


@pytest.mark.slow
def test_prediction_consistency_on_acceptance_run(full_runs):
    # N_p coarse steps against delta_c * N_p plant sub-steps, started from
    # every state the fine controller visits, with the flows it applied
    log, _ = full_runs.get("fine")
    cfg = full_runs.cfg
    s = ControllerSettings.from_scenario(cfg)
    dc, N = cfg.delta_c, s.horizon
    params = cfg.loop_params
    volume = np.array([p.volume for p in params])
    surface = np.array([p.S for p in params])
    eta_s = np.array([p.eta * p.S for p in params])
    worst = 0.0
    for k in range(0, log.t.size - dc * N, dc):
        q = log.q[k:k + dc * N:dc]
        power = eta_s * log.irradiance[k]
        pred = np.array([
            predict_outlet_sequence(
                ClusterBoundary(log.t_out[k, i], power[i], log.t_in[k], log.t_ambient[k],
                                np.zeros(N), 1, volume[i], surface[i]), q[:, i], s)
            for i in range(cfg.n_loops)
        ])
        t = log.t_out[k].copy()
        for n in range(N):
            for _ in range(dc):
                t = euler_step(t, log.t_in[k], log.t_ambient[k], q[n], power, volume, surface, cfg.dt_sim)
            worst = max(worst, float(np.abs(pred[:, n] - t).max()))
    assert worst <= 0.5, f"largest prediction gap {worst:.3f} degC"


# --- subproblems ----------------------------------------------------------------

def test_zero_error_boundary_sits_at_lower_bound():
    # the reference equals what the minimum flow produces, so only w_q acts
    s = ControllerSettings(horizon=3)
    b = boundary(horizon=3)
    b.t_ref = predict_outlet_sequence(b, np.full(3, s.q_min), s)
    sub = build_cluster_subproblem(b, s)
    res = aladin_solve([sub, sink_subproblem(3)], s.q_total * FLOW_SCALE, AladinConfig(epsilon=1e-9))
    assert res.converged
    assert np.allclose(res.q[0][:3], s.q_min * FLOW_SCALE, rtol=0, atol=1e-6)


def test_singleton_cluster_equals_loop_subproblem():
    s = ControllerSettings()
    model = lump_cluster([2], [0, 0, 241.0], [P0] * 3, [0, 0, 700.0], 172.0, 20.0, [1e-3] * 3, s.q_min, s.q_max)
    a = build_cluster_subproblem(ClusterBoundary.from_model(model, np.full(5, 250.0)), s)
    b = build_cluster_subproblem(boundary(241.0, 700.0, 172.0, 20.0), s)
    x = np.concatenate([np.full(5, 1.1), np.full(5, 0.2)])
    assert a.objective(x)[0] == b.objective(x)[0]
    assert np.array_equal(a.lb, b.lb) and np.array_equal(a.ub, b.ub)
    assert np.array_equal(a.constraints(x)[0], b.constraints(x)[0])


def test_identical_clusters_give_identical_subproblems_and_flows():
    s = ControllerSettings(horizon=3)
    subs = [build_cluster_subproblem(boundary(horizon=3), s) for _ in range(2)]
    res = aladin_solve(subs + [sink_subproblem(3)], s.q_total * FLOW_SCALE)
    assert res.converged
    assert np.allclose(res.q[0], res.q[1], atol=1e-7)


def test_box_scales_with_cluster_size():
    s = ControllerSettings()
    sub = build_cluster_subproblem(boundary(size=3), s)
    assert np.allclose(sub.lb[:5], 3 * s.q_min * FLOW_SCALE)
    assert np.allclose(sub.ub[:5], 3 * s.q_max * FLOW_SCALE)
    assert sub.n_coupled == 5 and sub.n == 10


def test_hard_band_has_no_slacks():
    sub = build_cluster_subproblem(boundary(), ControllerSettings(band="hard"))
    assert sub.n == 5 and sub.constraints is not None
    with pytest.raises(ValueError):
        ControllerSettings(band="loose")


def test_soft_band_start_is_feasible():
    agent = SoftBandAgent(ClusterObjective(boundary(t0=310.0, irr=1000.0), ControllerSettings()))
    x = agent.start(np.concatenate([np.full(5, 0.2), np.zeros(5)]))
    h, _ = agent.constraints(x)
    assert h.max() <= 1e-12 and np.all(x[5:] >= 0)


def _rel_err(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / scale


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(11)
    worst = 0.0
    for i in range(100):
        size = int(rng.integers(1, 4))
        horizon = int(rng.integers(1, 6))
        s = ControllerSettings(horizon=horizon)
        b = random_boundary(rng, horizon, size=size, settings=s)
        sub = build_cluster_subproblem(b, s)
        u = rng.uniform(sub.lb[:horizon], sub.ub[:horizon])
        x = np.concatenate([u, rng.uniform(0.0, 2.0, horizon)])
        _, g = sub.objective(x)
        worst = max(worst, _rel_err(g, fd_gradient(lambda z: sub.objective(z)[0], x)))
        _, J = sub.constraints(x)
        worst = max(worst, _rel_err(J, fd_jacobian(lambda z: sub.constraints(z)[0], x)))
        ob = ClusterObjective(b, s)
        _, M = ob.sensitivity(u)
        worst = max(worst, _rel_err(M, fd_jacobian(ob.predict, u)))
    assert worst <= 1e-5


# --- allocation -----------------------------------------------------------------

def test_allocate_pair_cluster():
    p = Partition.from_labels([0, 1, 1, 2, 3, 4, 5, 1, 6, 7])
    q_star = [1.0e-3] * p.n_clusters
    q_star[1] = 2.7e-3
    plan = allocate_flows(p, q_star)
    assert plan.loop_flows[1] == pytest.approx(0.9e-3)
    assert plan.loop_flows[2] == pytest.approx(0.9e-3)
    assert plan.loop_flows[7] == pytest.approx(0.9e-3)
    p2 = Partition([(2, 6), (0, 1, 3, 4, 5, 7, 8, 9)])
    plan = allocate_flows(p2, [1.8e-3, 8 * 0.2e-3])
    assert plan.loop_flows[2] == plan.loop_flows[6] == pytest.approx(0.9e-3)


def test_allocate_singletons_and_lower_bounds():
    p = Partition.singletons(4)
    assert np.array_equal(allocate_flows(p, [1e-3, 2e-3, 3e-4, 4e-4]).loop_flows, [1e-3, 2e-3, 3e-4, 4e-4])
    p = Partition([(0, 1), (2,), (3,)])
    plan = allocate_flows(p, [[2 * 0.2e-3, 1.0], [0.2e-3], [0.2e-3]])
    assert np.allclose(plan.loop_flows, 0.2e-3)
    with pytest.raises(ValueError):
        allocate_flows(p, [1e-3])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 3e-3), min_size=1, max_size=12))
def test_repair_flows_feasible(q):
    n = len(q)
    out = repair_flows(q, 0.2e-3, 2e-3, max(9e-3, n * 0.2e-3))
    assert np.all(out >= 0.2e-3 - 1e-18) and np.all(out <= 2e-3)
    assert out.sum() <= max(9e-3, n * 0.2e-3) + 1e-12


def test_repair_keeps_equal_flows_equal():
    out = repair_flows(np.full(10, 1.2e-3), 0.2e-3, 2e-3, 9e-3)
    assert np.allclose(out, 0.9e-3) and out.sum() == pytest.approx(9e-3)


# --- centralized oracle -----------------------------------------------------------

def test_centralized_single_loop_matches_local_solve():
    s = ControllerSettings(horizon=3, q_total=1.0)
    b = boundary(horizon=3)
    ref = centralized_reference_solve([b], s)
    assert ref.status == "success"
    sub = build_cluster_subproblem(b, s)
    alone = solve_nlp(NlpProblem(sub.objective, sub.n, sub.lb, sub.ub, sub.constraints, sub.curvature),
                      np.clip(np.zeros(sub.n), sub.lb, sub.ub))
    assert alone.success
    assert np.allclose(ref.flows[0], alone.x[:3] / FLOW_SCALE, rtol=0, atol=1e-9)
    assert ref.objective == pytest.approx(alone.objective, rel=1e-9)


def test_centralized_symmetry():
    s = ControllerSettings(horizon=3)
    ref = centralized_reference_solve([boundary(horizon=3, irr=900.0)] * 3, s)
    assert ref.status == "success"
    assert np.allclose(ref.flows[0], ref.flows[1], atol=1e-9)
    assert np.allclose(ref.flows[1], ref.flows[2], atol=1e-9)
    assert np.sum(ref.flows, axis=0).max() <= s.q_total + 1e-12


def test_aladin_matches_centralized_on_three_loops():
    rng = np.random.default_rng(5)
    s = ControllerSettings(horizon=3)
    bs = [random_boundary(rng, 3, settings=s) for _ in range(3)]
    ref = centralized_reference_solve(bs, s)
    subs = [build_cluster_subproblem(b, s) for b in bs] + [sink_subproblem(3)]
    res = aladin_solve(subs, s.q_total * FLOW_SCALE, s.aladin)
    assert res.converged
    f_al = sum(sp.objective(x)[0] for sp, x in zip(subs[:-1], res.q))
    assert f_al == pytest.approx(ref.objective, rel=1e-4)
    assert certify(subs, res, s.q_total * FLOW_SCALE, s.aladin.epsilon, s.aladin.local_tol).ok


def test_sink_accounting():
    rng = np.random.default_rng(8)
    s = ControllerSettings()
    for _ in range(5):
        subs = [build_cluster_subproblem(random_boundary(rng, 5, settings=s), s) for _ in range(4)]
        subs.append(sink_subproblem(5))
        res = aladin_solve(subs, s.q_total * FLOW_SCALE, s.aladin)
        total = np.sum([res.coupled(j) for j in range(len(subs))], axis=0) / FLOW_SCALE
        assert np.allclose(total, s.q_total, atol=s.aladin.epsilon / FLOW_SCALE)
        assert np.all(res.q[-1] >= 0)


def test_cluster_cost_is_slack_free():
    s = ControllerSettings()
    b = boundary()
    q = np.full(5, 1e-3)
    assert cluster_cost([b], [q], s) == pytest.approx(ClusterObjective(b, s)(q * FLOW_SCALE)[0])


# --- closed loop ------------------------------------------------------------------

def short_scenario(**kw):
    base = dict(n_loops=4, duration=300.0, dt_cluster=60.0, q_total=4.5e-3, t_init=240.0, n_cl_max=3,
                warmup=60.0,
                irradiance=IrradianceSpec(peak=900.0, day_length=25200.0, day_offset=9000.0))
    base.update(kw)
    return ScenarioConfig(**base)


def test_coarse_mode_equal_flows():
    log = run_closed_loop(short_scenario(eta=[0.5, 0.55, 0.6, 0.65]), "coarse")
    assert np.allclose(log.q, log.q[:, :1], rtol=0, atol=1e-15)
    assert log.q.max() <= 4.5e-3 / 4 + 1e-15
    assert all(r.converged and r.kkt_ok for r in log.control)


def test_fine_mode_identical_loops_stay_identical():
    log = run_closed_loop(short_scenario(duration=1200.0), "fine")
    assert np.allclose(log.t_out, log.t_out[:, :1], atol=1e-9)
    assert np.allclose(log.q, log.q[:, :1], atol=1e-12)
    assert abs(log.t_out[-1, 0] - 250.0) < abs(log.t_out[0, 0] - 250.0)


def test_closed_loop_feasibility_and_log_shape():
    cfg = short_scenario(eta=[0.5, 0.55, 0.6, 0.65])
    log = run_closed_loop(cfg, "dynamic")
    K = cfg.n_steps
    assert log.t_out.shape == (K, 4) and log.q.shape == (K, 4)
    assert np.all(np.diff(log.t) > 0)
    assert np.all(log.q >= cfg.q_min) and np.all(log.q <= cfg.q_max)
    assert np.all(log.q.sum(axis=1) <= cfg.q_total + 1e-9)
    assert len(log.control) == K // cfg.delta_c
    assert [p["k"] for p in log.partitions] == list(range(0, K, cfg.delta_cl))


def test_frozen_mode_requires_partition():
    with pytest.raises(ValueError):
        run_closed_loop(short_scenario(), "frozen")
    with pytest.raises(ValueError):
        run_closed_loop(short_scenario(), "sideways")
