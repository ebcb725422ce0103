"""Clustered MPC agents, flow allocation and the closed-loop simulation.

Optimization variables are cluster flows expressed in l/s (``FLOW_SCALE``
times the SI value) so that gradients and Hessians are of order one; all
costs, logs and plant quantities stay in SI units.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .aladin import AgentSubproblem, AladinConfig, DegenerateCoordination, aladin_solve
from .partitioning import Partition, build_feature_dataset, select_partition
from .plant import euler_step, inlet_step, lump_cluster, mixed_outlet
from .scenario import ScenarioConfig, build_exogenous
from .solvers import NlpProblem, kkt_residuals, solve_nlp

FLOW_SCALE = 1e3
SINK_WEIGHT = 1e-6
MODES = ("dynamic", "fine", "coarse", "frozen")


@dataclass
class ControllerSettings:
    dt_control: float = 30.0
    horizon: int = 5
    w_e: float = 1e-3
    w_q: float = 1.0
    t_min: float = 220.0
    t_max: float = 305.0
    q_min: float = 0.2e-3
    q_max: float = 2e-3
    q_total: float = 9e-3
    band: str = "soft"
    band_penalty: float = 1e6
    aladin: AladinConfig = field(default_factory=AladinConfig)

    def __post_init__(self):
        if self.band not in ("soft", "hard"):
            raise ValueError(f"band must be 'soft' or 'hard', got {self.band!r}")

    @classmethod
    def from_scenario(cls, cfg: ScenarioConfig, **overrides) -> "ControllerSettings":
        kw = dict(
            dt_control=cfg.dt_control,
            horizon=cfg.horizon,
            w_e=cfg.w_e,
            w_q=cfg.w_q,
            t_min=cfg.t_min,
            t_max=cfg.t_max,
            q_min=cfg.q_min,
            q_max=cfg.q_max,
            q_total=cfg.q_total,
            band_penalty=cfg.band_penalty,
            aladin=AladinConfig(
                rho0=cfg.aladin.rho0,
                mu0=cfg.aladin.mu0,
                sigma=cfg.aladin.sigma,
                epsilon=cfg.epsilon,
                max_iter=cfg.aladin.max_iter,
            ),
        )
        kw.update(overrides)
        return cls(**kw)


@dataclass
class ClusterBoundary:
    """Data a cluster agent needs at one control instant."""

    t0: float
    power: float
    t_in: float
    t_ambient: float
    t_ref: np.ndarray
    size: int = 1
    volume: float = 5.067e-4 * 142.0
    surface: float = 267.4

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("cluster size must be at least 1")
        self.t_ref = np.atleast_1d(np.asarray(self.t_ref, dtype=float))

    @classmethod
    def from_model(cls, model, t_ref) -> "ClusterBoundary":
        return cls(model.t0, model.power, model.t_in, model.t_ambient, t_ref,
                   model.size, model.volume, model.surface)


class ClusterObjective:
    """Cost, gradient and band constraints of one cluster agent in l/s units."""

    def __init__(self, boundary: ClusterBoundary, settings: ControllerSettings):
        self.b = boundary
        self.s = settings
        self.n = boundary.t_ref.size

    def _forward(self, u):
        b = self.b
        dt, V, S = self.s.dt_control, b.volume, b.surface
        tin, ta, pw = b.t_in, b.t_ambient, b.power
        T = [float(b.t0)]
        dT, dq = [], []
        for n in range(self.n):
            tn = T[-1]
            q = float(u[n]) / FLOW_SCALE
            tm = 0.5 * (tn + tin)
            rho = 903.0 - 0.672 * tm
            c = 1820.0 + 3.478 * tm
            P = rho * c
            d = tm - ta
            net = pw - S * (0.00249 * d * d - 0.06133 * d)
            T.append(tn + dt * net / (P * V) - dt * q * (tn - tin) / V)
            dP = -0.672 * c + 3.478 * rho
            dnet = -S * (0.00498 * d - 0.06133)
            dT.append(1.0 + 0.5 * dt * (dnet / (P * V) - net * dP / (P * P * V)) - dt * q / V)
            dq.append(-dt * (tn - tin) / V / FLOW_SCALE)
        return T, dT, dq

    def predict(self, u) -> np.ndarray:
        return np.array(self._forward(u)[0][1:])

    def __call__(self, u):
        s, b = self.s, self.b
        T, dT, dq = self._forward(u)
        size = b.size
        ref = b.t_ref
        f = 0.0
        g = np.empty(self.n)
        adj = 0.0
        for n in range(self.n - 1, -1, -1):
            e = T[n + 1] - ref[n]
            q = float(u[n]) / FLOW_SCALE
            f += size * (s.w_e * e * e + s.w_q * q * q)
            adj += 2.0 * size * s.w_e * e
            g[n] = adj * dq[n] + 2.0 * size * s.w_q * q / FLOW_SCALE
            adj *= dT[n]
        return f, g

    def sensitivity(self, u) -> tuple[np.ndarray, np.ndarray]:
        """Predicted temperatures and their Jacobian with respect to u."""
        T, dT, dq = self._forward(u)
        M = np.zeros((self.n, self.n))
        for n in range(self.n):
            if n:
                M[n, :n] = dT[n] * M[n - 1, :n]
            M[n, n] = dq[n]
        return np.array(T[1:]), M

    def curvature(self, u) -> np.ndarray:
        """Gauss-Newton Hessian model of the tracking cost."""
        s, b = self.s, self.b
        _, M = self.sensitivity(u)
        H = 2.0 * b.size * s.w_e * (M.T @ M)
        H[np.diag_indices(self.n)] += 2.0 * b.size * s.w_q / FLOW_SCALE**2
        return H

    def band(self, u):
        """Hard band h(u) <= 0: [T - T_max; T_min - T]."""
        T, M = self.sensitivity(u)
        return np.concatenate([T - self.s.t_max, self.s.t_min - T]), np.vstack([M, -M])


def predict_outlet_sequence(boundary: ClusterBoundary, q_seq, settings: ControllerSettings) -> np.ndarray:
    """Outlet temperatures T(n+1|k), n = 0..N_p-1, for flows ``q_seq`` in m^3/s."""
    q_seq = np.asarray(q_seq, dtype=float)
    if q_seq.size != boundary.t_ref.size:
        raise ValueError("q_seq length must match the horizon")
    return ClusterObjective(boundary, settings).predict(q_seq * FLOW_SCALE)


class SoftBandAgent:
    """Cluster agent over x = (u, s) with per-stage band slacks s >= 0.

    The band becomes T - T_max <= s and T_min - T <= s, and the slacks are
    charged band_penalty * |s|^2.
    """

    def __init__(self, objective: ClusterObjective):
        self.ob = objective
        self.n = objective.n
        self.pen = objective.s.band_penalty

    def __call__(self, x):
        n = self.n
        f, g = self.ob(x[:n])
        sl = x[n:]
        return f + self.pen * float(sl @ sl), np.concatenate([g, 2.0 * self.pen * sl])

    def constraints(self, x):
        n = self.n
        s = self.ob.s
        T, M = self.ob.sensitivity(x[:n])
        sl = x[n:]
        eye = np.eye(n)
        h = np.concatenate([T - s.t_max - sl, s.t_min - T - sl])
        return h, np.block([[M, -eye], [-M, -eye]])

    def start(self, x):
        """Raise the slacks so that the band constraints hold at x."""
        n = self.n
        s = self.ob.s
        T = self.ob.predict(x[:n])
        x = np.array(x, dtype=float)
        x[n:] = np.maximum.reduce([x[n:], T - s.t_max, s.t_min - T, np.zeros(n)])
        return x

    def curvature(self, x):
        n = self.n
        H = np.zeros((2 * n, 2 * n))
        H[:n, :n] = self.ob.curvature(x[:n])
        H[n:, n:] = 2.0 * self.pen * np.eye(n)
        return H


def build_cluster_subproblem(boundary: ClusterBoundary, settings: ControllerSettings, name: str = "") -> AgentSubproblem:
    """Agent NLP of one cluster: coupled flows in l/s, plus slacks if the band is soft."""
    obj = ClusterObjective(boundary, settings)
    n = obj.n
    lb = np.full(n, boundary.size * settings.q_min * FLOW_SCALE)
    ub = np.full(n, boundary.size * settings.q_max * FLOW_SCALE)
    if settings.band == "hard":
        return AgentSubproblem(obj, lb, ub, constraints=obj.band, name=name, curvature=obj.curvature)
    agent = SoftBandAgent(obj)
    return AgentSubproblem(
        agent,
        np.concatenate([lb, np.zeros(n)]),
        np.concatenate([ub, np.full(n, np.inf)]),
        constraints=agent.constraints,
        name=name,
        curvature=agent.curvature,
        n_private=n,
        start=agent.start,
    )


def sink_subproblem(horizon: int) -> AgentSubproblem:
    """Sink agent absorbing unused budget; its small cost is charged in m^3/s like the clusters'."""
    w = SINK_WEIGHT / FLOW_SCALE**2

    def objective(u):
        return w * float(u @ u), 2.0 * w * u

    return AgentSubproblem(objective, np.zeros(horizon), np.full(horizon, np.inf), name="sink",
                           curvature=lambda u: 2.0 * w * np.eye(horizon))


@dataclass
class FlowPlan:
    cluster_plans: list[np.ndarray]
    loop_flows: np.ndarray


def allocate_flows(partition: Partition, q_star, n_loops: int | None = None) -> FlowPlan:
    """Split each cluster's first-stage flow evenly among its loops.

    ``q_star`` holds one entry per cluster, either the first-stage value or
    the whole optimized sequence (whose first element is used).
    """
    plans = [np.atleast_1d(np.asarray(q, dtype=float)) for q in q_star]
    if len(plans) != partition.n_clusters:
        raise ValueError("one flow sequence per cluster is required")
    q = np.zeros(n_loops or partition.n_loops)
    for members, plan in zip(partition.clusters, plans):
        q[list(members)] = plan[0] / len(members)
    return FlowPlan(plans, q)


def repair_flows(q, q_min: float, q_max: float, q_total: float) -> np.ndarray:
    """Project flows into the box and remove any excess over the field budget.

    The excess is taken from each loop in proportion to its headroom above
    q_min, so equal flows stay equal.
    """
    q = np.clip(np.asarray(q, dtype=float), q_min, q_max)
    excess = q.sum() - q_total
    if excess > 0:
        room = q - q_min
        q = q - excess * room / room.sum()
        q = np.clip(q, q_min, q_max)
    return q


def _monolithic_problem(subproblems, q_total_scaled):
    N = subproblems[0].n_coupled
    sizes = [sp.n for sp in subproblems]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    nx = int(offsets[-1])

    def objective(x):
        f = 0.0
        g = np.empty(nx)
        for j, sp in enumerate(subproblems):
            fj, gj = sp.objective(x[offsets[j]:offsets[j + 1]])
            f += fj
            g[offsets[j]:offsets[j + 1]] = gj
        return f, g

    def constraints(x):
        total = np.zeros(N)
        cjac = np.zeros((N, nx))
        hs, jac = [], []
        for j, sp in enumerate(subproblems):
            xj = x[offsets[j]:offsets[j + 1]]
            total += xj[:N]
            cjac[:, offsets[j]:offsets[j] + N] = np.eye(N)
            if sp.constraints is not None:
                h, Jb = sp.constraints(xj)
                row = np.zeros((h.size, nx))
                row[:, offsets[j]:offsets[j + 1]] = Jb
                hs.append(h)
                jac.append(row)
        return np.concatenate([total - q_total_scaled] + hs), np.vstack([cjac] + jac)

    def curvature(x):
        H = np.zeros((nx, nx))
        for j, sp in enumerate(subproblems):
            blk = slice(offsets[j], offsets[j + 1])
            H[blk, blk] = sp.curvature(x[blk]) if sp.curvature is not None else np.eye(sizes[j])
        return H

    lb = np.concatenate([sp.lb for sp in subproblems])
    ub = np.concatenate([sp.ub for sp in subproblems])
    return NlpProblem(objective, nx, lb, ub, constraints, curvature), offsets


@dataclass
class CentralizedSolution:
    flows: list[np.ndarray]
    objective: float
    status: str
    kkt_residual: float


def centralized_reference_solve(boundaries, settings: ControllerSettings, tol: float = 1e-9) -> CentralizedSolution:
    """Solve all agents jointly with the field budget as a hard inequality.

    Returns per-agent flow sequences in m^3/s and the summed agent cost.
    """
    subs = [build_cluster_subproblem(b, settings) for b in boundaries]
    prob, offsets = _monolithic_problem(subs, settings.q_total * FLOW_SCALE)
    x0 = np.clip(np.zeros(prob.n), prob.lb, prob.ub)
    rep = solve_nlp(prob, x0, tol=tol, max_iter=500)
    N = subs[0].n_coupled
    flows = [rep.x[offsets[j]:offsets[j] + N] / FLOW_SCALE for j in range(len(subs))]
    return CentralizedSolution(flows, rep.objective, rep.status, rep.kkt_residual)


def cluster_cost(boundaries, flows, settings: ControllerSettings) -> float:
    """Tracking cost of flows given in m^3/s, summed over agents (slacks excluded)."""
    return sum(ClusterObjective(b, settings)(np.asarray(q) * FLOW_SCALE)[0] for b, q in zip(boundaries, flows))


# ---------------------------------------------------------------------------
# certification

@dataclass
class Certificate:
    local_ok: bool
    coupling_ok: bool
    stationarity: float
    coupling_residual: float

    @property
    def ok(self) -> bool:
        return self.local_ok and self.coupling_ok


def _projected_bound_multipliers(r, x, lb, ub):
    w = np.zeros_like(r)
    at_lb = np.isfinite(lb) & (x - lb <= 1e-6 * (1 + np.abs(lb)))
    at_ub = np.isfinite(ub) & (ub - x <= 1e-6 * (1 + np.abs(ub)))
    w[at_lb & (r > 0)] = -r[at_lb & (r > 0)]
    w[at_ub & (r < 0)] = -r[at_ub & (r < 0)]
    return w


def certify(subproblems, result, q_total_scaled, epsilon: float, local_tol: float) -> Certificate:
    """Independent KKT check of an ALADIN return.

    Each local solve must satisfy the KKT conditions of its augmented
    problem within 10*local_tol, measured relative to the gradient and
    multiplier scale as the local solver does.  At the returned point each agent's own
    objective plus the coupling multiplier must be stationary within
    10*epsilon, and the coupling residual must not exceed epsilon.
    Bound multipliers are re-derived from the gradients, not taken from
    the solver.
    """
    local_ok = True
    worst = 0.0
    lam = result.lam
    for sp, rep, y, sigma in zip(subproblems, result.local_reports, result.y, result.sigma):
        x = rep.x
        _, g = sp.objective(x)
        h = J = kappa = None
        active = 0.0
        if sp.constraints is not None:
            h, J = sp.constraints(x)
            kappa = rep.ineq_multipliers
            active = J.T @ kappa
        lam_full = np.zeros(sp.n)
        lam_full[:lam.size] = lam
        g_aug = g + lam_full + result.rho * sigma * (x - y)
        w = _projected_bound_multipliers(g_aug + active, x, sp.lb, sp.ub)
        res = kkt_residuals(g_aug, x, sp.lb, sp.ub, w, h, J, kappa, relative=True)
        local_ok &= rep.success and res.ok(10 * local_tol)
        r = g + lam_full + active
        w = _projected_bound_multipliers(r, x, sp.lb, sp.ub)
        worst = max(worst, float(np.linalg.norm(r + w, np.inf)))
    coupling = float(np.linalg.norm(np.sum([result.coupled(j) for j in range(len(result.q))], axis=0)
                                    - q_total_scaled))
    return Certificate(local_ok, coupling <= epsilon and worst <= 10 * epsilon, worst, coupling)


# ---------------------------------------------------------------------------
# closed loop

@dataclass
class ControlRecord:
    k: int
    n_clusters: int
    iterations: int
    converged: bool
    failed: bool
    coupling_residual: float
    kkt_ok: bool
    stationarity: float
    t_nlp: list[float]
    t_sens: list[float]
    t_qp: float


@dataclass
class SimulationLog:
    t: np.ndarray
    t_out: np.ndarray
    q: np.ndarray
    t_in: np.ndarray
    t_mix: np.ndarray
    irradiance: np.ndarray
    t_ambient: np.ndarray
    t_ref: np.ndarray
    stage_cost: np.ndarray
    cluster: np.ndarray
    partitions: list[dict] = field(default_factory=list)
    control: list[ControlRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_loops(self) -> int:
        return self.t_out.shape[1]


def _shift(seq):
    seq = np.asarray(seq, dtype=float)
    return np.concatenate([seq[1:], seq[-1:]])


class _WarmStart:
    """Per-loop plans, sink plan, multiplier and agent Hessians between steps."""

    def __init__(self, n_loops, horizon, q_min, q_total):
        self.loop_plan = np.full((n_loops, horizon), q_min * FLOW_SCALE)
        self.sink_plan = np.full(horizon, (q_total - n_loops * q_min) * FLOW_SCALE)
        self.lam = np.zeros(horizon)
        self.private: dict = {}
        self.hessians: dict = {}

    def guesses(self, partition, subproblems):
        y = []
        for c, sp in zip(partition.clusters, subproblems):
            yc = _shift(self.loop_plan[list(c)].sum(axis=0))
            if sp.n_private:
                prev = self.private.get(c)
                yc = np.concatenate([yc, np.zeros(sp.n_private) if prev is None else _shift(prev)])
            y.append(yc)
        y.append(_shift(self.sink_plan))
        H = [self.hessians.get(c) for c in partition.clusters] + [self.hessians.get("sink")]
        return y, _shift(self.lam), H

    def update(self, partition, result):
        N = self.lam.size
        for c, qc in zip(partition.clusters, result.q[:-1]):
            self.loop_plan[list(c)] = qc[:N] / len(c)
        self.private = {c: qc[N:].copy() for c, qc in zip(partition.clusters, result.q[:-1]) if qc.size > N}
        self.sink_plan = result.q[-1].copy()
        self.lam = result.lam.copy()
        keys = list(partition.clusters) + ["sink"]
        self.hessians = {key: H for key, H in zip(keys, result.hessians) if H is not None}


def _stage_cost(t_out, t_ref, q, w_e, w_q):
    e = t_out - t_ref
    return float(w_e * (e @ e) + w_q * (q @ q))


def run_closed_loop(
    cfg: ScenarioConfig,
    mode: str = "dynamic",
    n_cl_max: int | None = None,
    dt_cluster: float | None = None,
    seed: int | None = None,
    partition: Partition | None = None,
    settings: ControllerSettings | None = None,
    duration: float | None = None,
    progress=None,
) -> SimulationLog:
    """Simulate the field under the clustered DMPC.

    ``mode`` is ``dynamic`` (re-cluster every ``dt_cluster`` seconds with at
    most ``n_cl_max`` clusters), ``fine`` (one agent per loop), ``coarse``
    (one agent for the whole field) or ``frozen`` (the given ``partition``).
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    n = cfg.n_loops
    seed = cfg.seed if seed is None else seed
    n_cl_max = cfg.n_cl_max if n_cl_max is None else n_cl_max
    dt_cluster = cfg.dt_cluster if dt_cluster is None else dt_cluster
    settings = settings or ControllerSettings.from_scenario(cfg)
    if mode == "fine":
        partition = Partition.singletons(n)
    elif mode == "coarse":
        partition = Partition.whole(n)
    elif mode == "frozen":
        if partition is None or not partition.covers(n):
            raise ValueError("frozen mode needs a partition covering every loop")
    else:
        partition = None
        ratio = dt_cluster / cfg.dt_sim
        if math.isfinite(ratio) and (abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1):
            raise ValueError("dt_cluster must be an integer multiple of dt_sim")
    delta_c = cfg.delta_c
    delta_cl = None
    if mode == "dynamic":
        # an infinite period clusters once, at k = 0
        ratio = dt_cluster / cfg.dt_sim
        delta_cl = int(round(ratio)) if math.isfinite(ratio) else math.inf
    K = int(round((duration or cfg.duration) / cfg.dt_sim))
    N = settings.horizon
    dt = cfg.dt_sim

    params = cfg.loop_params
    eta_s = np.array([p.eta * p.S for p in params])
    volume = np.array([p.volume for p in params])
    surface = np.array([p.S for p in params])
    table = build_exogenous(cfg)

    t_out = cfg.initial_temperatures().astype(float)
    t_in = float(cfg.t_in0) if cfg.t_in0 is not None else float(np.mean(t_out) - 80.0)
    q_prev = np.full(n, cfg.q_min)
    q = q_prev.copy()
    warm = _WarmStart(n, N, cfg.q_min, cfg.q_total)
    cap_scaled = cfg.q_total * FLOW_SCALE

    log = SimulationLog(
        t=np.arange(K) * dt,
        t_out=np.empty((K, n)),
        q=np.empty((K, n)),
        t_in=np.empty(K),
        t_mix=np.empty(K),
        irradiance=np.empty((K, n)),
        t_ambient=np.empty(K),
        t_ref=np.empty(K),
        stage_cost=np.empty(K),
        cluster=np.empty((K, n), dtype=int),
        meta=dict(mode=mode, n_cl_max=n_cl_max, dt_cluster=dt_cluster, seed=seed,
                  w_e=cfg.w_e, w_q=cfg.w_q, warmup=cfg.warmup, dt_sim=dt,
                  dt_control=cfg.dt_control, q_min=cfg.q_min, q_max=cfg.q_max,
                  q_total=cfg.q_total, band=settings.band),
    )
    epoch = 0
    if partition is not None:
        log.partitions.append(dict(k=0, clusters=[list(c) for c in partition.clusters]))

    for k in range(K):
        r = table.index(k * dt)
        irr = table.irradiance[r]
        t_amb = float(table.t_ambient[r])
        t_ref_k = cfg.reference_at(k * dt)
        t_mix = mixed_outlet(t_out, q_prev)

        if delta_cl is not None and (k == 0 or (delta_cl != math.inf and k % delta_cl == 0)):
            points = build_feature_dataset(t_out, t_in, params, irr)
            partition = select_partition(points, n_cl_max, seed=seed * 100003 + epoch, epoch=epoch)
            log.partitions.append(dict(k=k, clusters=[list(c) for c in partition.clusters]))
            epoch += 1

        if k % delta_c == 0:
            refs = np.array([cfg.reference_at((k + (m + 1) * delta_c) * dt) for m in range(N)])
            boundaries = [
                ClusterBoundary.from_model(
                    lump_cluster(c, t_out, params, irr, t_in, t_amb, q_prev, cfg.q_min, cfg.q_max), refs)
                for c in partition.clusters
            ]
            subs = [build_cluster_subproblem(b, settings, name=str(c))
                    for b, c in zip(boundaries, partition.clusters)]
            subs.append(sink_subproblem(N))
            y0, lam0, H0 = warm.guesses(partition, subs)
            failed = False
            try:
                res = aladin_solve(subs, cap_scaled, settings.aladin, y0=y0, lam0=lam0, hessians=H0)
            except DegenerateCoordination:
                res = None
            if res is None or not res.converged:
                failed = True
            if res is not None:
                cert = certify(subs, res, cap_scaled, settings.aladin.epsilon, settings.aladin.local_tol)
                warm.update(partition, res)
            if not failed:
                plan = allocate_flows(partition, [res.coupled(j) / FLOW_SCALE for j in range(partition.n_clusters)], n)
                q = repair_flows(plan.loop_flows, cfg.q_min, cfg.q_max, cfg.q_total)
            log.control.append(ControlRecord(
                k=k,
                n_clusters=partition.n_clusters,
                iterations=res.iterations if res else 0,
                converged=bool(res and res.converged),
                failed=failed,
                coupling_residual=res.coupling_residual if res else math.inf,
                kkt_ok=cert.ok if res else False,
                stationarity=cert.stationarity if res else math.inf,
                t_nlp=list(res.t_nlp) if res else [],
                t_sens=list(res.t_sens) if res else [],
                t_qp=res.t_qp if res else 0.0,
            ))
            if progress is not None:
                progress(k, K, log.control[-1])

        log.t_out[k] = t_out
        log.q[k] = q
        log.t_in[k] = t_in
        log.t_mix[k] = t_mix
        log.irradiance[k] = irr
        log.t_ambient[k] = t_amb
        log.t_ref[k] = t_ref_k
        log.stage_cost[k] = _stage_cost(t_out, t_ref_k, q, cfg.w_e, cfg.w_q)
        log.cluster[k] = partition.labels()

        t_out = euler_step(t_out, t_in, t_amb, q, eta_s * irr, volume, surface, dt)
        t_in = inlet_step(t_in, t_mix, dt)
        q_prev = q
    return log
