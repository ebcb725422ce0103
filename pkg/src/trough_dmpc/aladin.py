"""ALADIN coordination of separable NLPs sharing one affine coupling.

Every agent j owns a block q_j whose first N entries are coupled through
sum_j q_j[:N] = Q_T * 1; any further entries are private to the agent (for
example slack variables).  Each iteration solves the local NLPs, collects
gradients, BFGS Hessians and active-constraint Jacobians, and then solves
one equality-constrained QP to produce the primal step and the new coupling
multiplier.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .solvers import NlpProblem, QpProblem, SolveReport, solve_kkt, solve_nlp, solve_qp

MIN_EIG = 1e-8


class DegenerateCoordination(RuntimeError):
    pass


@dataclass
class AgentSubproblem:
    """Local NLP of one agent: ``objective(q) -> (f, grad)``, optional h(q) <= 0.

    The last ``n_private`` variables do not enter the coupling.
    ``curvature(q)``, when given, returns a positive semidefinite model of
    the objective Hessian used to seed the local BFGS matrix.  ``start(q)``
    may move a boxed point to a better local starting point.
    """

    objective: Callable[[np.ndarray], tuple[float, np.ndarray]]
    lb: np.ndarray
    ub: np.ndarray
    constraints: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    name: str = ""
    curvature: Callable[[np.ndarray], np.ndarray] | None = None
    n_private: int = 0
    start: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        if self.lb.shape != self.ub.shape:
            raise ValueError("lb and ub must have the same shape")
        if not 0 <= self.n_private < self.lb.size:
            raise ValueError("an agent needs at least one coupled variable")

    @property
    def n(self) -> int:
        return self.lb.size

    @property
    def n_coupled(self) -> int:
        return self.lb.size - self.n_private


@dataclass
class AladinConfig:
    rho0: float = 1e2
    mu0: float = 1e3
    sigma: np.ndarray | float = 1.0
    epsilon: float = 1e-5
    max_iter: int = 50
    growth: float = 10.0
    penalty_cap: float = 1e8
    local_tol: float = 1e-9

    def __post_init__(self):
        if not (self.rho0 > 0 and self.mu0 > 0 and self.epsilon > 0 and self.growth > 0):
            raise ValueError("ALADIN penalties, growth and tolerance must be positive")
        if np.any(np.asarray(self.sigma) <= 0):
            raise ValueError("scaling Sigma must be positive definite")
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")


@dataclass
class Sensitivity:
    """``G`` holds all active rows; ``G_ineq`` only those of the general
    inequalities, for coordination QPs that keep the box explicitly."""

    g: np.ndarray
    H: np.ndarray
    G: np.ndarray
    G_ineq: np.ndarray | None = None


@dataclass
class AladinIterate:
    """State carried between ALADIN iterations."""

    y: list[np.ndarray]
    lam: np.ndarray
    q: list[np.ndarray] = field(default_factory=list)
    sens: list[Sensitivity] = field(default_factory=list)
    beta: tuple[float, float, float] = (1.0, 1.0, 1.0)
    p: int = 0

    def advance(self, dq, lam_qp) -> "AladinIterate":
        y, lam = primal_dual_update(self.y, self.q, dq, self.lam, lam_qp, self.beta)
        return AladinIterate(y=y, lam=lam, beta=self.beta, p=self.p + 1)


@dataclass
class AladinResult:
    q: list[np.ndarray]
    lam: np.ndarray
    iterations: int
    converged: bool
    coupling_residual: float
    t_nlp: list[float]
    t_sens: list[float]
    t_qp: float
    local_reports: list[SolveReport]
    hessians: list[np.ndarray]
    y: list[np.ndarray] = field(default_factory=list)
    rho: float = 0.0
    sigma: list[np.ndarray] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)

    def coupled(self, j: int) -> np.ndarray:
        return self.q[j][: self.lam.size]


def agent_sigma(sigma, sub: AgentSubproblem) -> np.ndarray:
    """Diagonal of Sigma for one agent; private variables get weight 1."""
    s = np.asarray(sigma, dtype=float)
    if s.ndim == 0:
        return np.full(sub.n, float(s))
    if s.size == sub.n:
        return s.copy()
    if s.size == sub.n_coupled:
        return np.concatenate([s, np.ones(sub.n_private)])
    raise ValueError("sigma must be scalar or match the coupled dimension")


def local_step(
    sub: AgentSubproblem,
    y,
    lam,
    rho: float,
    sigma,
    hessian0=None,
    tol: float = 1e-9,
) -> SolveReport:
    """min f(q) + lam'q_c + rho/2 |q - y|^2_Sigma over the agent's feasible set."""
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lam, dtype=float)
    nc = sub.n_coupled
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
    rs = rho * sigma

    def augmented(q):
        f, g = sub.objective(q)
        dq = q - y
        g = g + rs * dq
        g[:nc] += lam
        return f + lam @ q[:nc] + 0.5 * dq @ (rs * dq), g

    curvature = None
    if sub.curvature is not None:
        def curvature(q):
            return sub.curvature(q) + np.diag(rs)
    prob = NlpProblem(augmented, sub.n, sub.lb, sub.ub, sub.constraints, curvature)
    x0 = np.clip(y, sub.lb, sub.ub)
    if sub.start is not None:
        x0 = np.clip(sub.start(x0), sub.lb, sub.ub)
    return solve_nlp(prob, x0, tol=tol, hessian0=hessian0)


def _residuals(local_solutions, y, q_total):
    N = q_total.size
    q = np.sum([v[:N] for v in local_solutions], axis=0)
    coupling = float(np.linalg.norm(q - q_total))
    primal = float(np.linalg.norm(np.sum([a[:N] - b[:N] for a, b in zip(local_solutions, y)], axis=0)))
    return coupling, primal


def _dual_residual(local_solutions, y, rho, sigmas) -> float:
    """Largest per-agent proximal force rho*Sigma*(x_j - y_j).

    This is the stationarity defect of each agent's own problem at the
    returned multiplier, which the summed primal residual alone does not
    bound: per-agent deviations may cancel in the sum.
    """
    gaps = [np.linalg.norm(rho * np.asarray(sg) * (np.asarray(a) - np.asarray(b)))
            for a, b, sg in zip(local_solutions, y, sigmas)]
    return float(max(gaps, default=0.0))


def check_termination(local_solutions, y, q_total, epsilon) -> bool:
    """Coupling residual and summed primal residual within epsilon."""
    N = min(np.size(a) for a in local_solutions) if np.ndim(q_total) == 0 else np.size(q_total)
    q_total = np.broadcast_to(np.asarray(q_total, dtype=float), (N,))
    coupling, primal = _residuals(local_solutions, y, q_total)
    return bool(coupling <= epsilon and primal <= epsilon)


def _box_center(sp):
    both = np.isfinite(sp.lb) & np.isfinite(sp.ub)
    mid = np.zeros(sp.n)
    mid[both] = 0.5 * (sp.lb[both] + sp.ub[both])
    return np.clip(mid, sp.lb, sp.ub)


def _regularize(H):
    H = 0.5 * (H + H.T)
    w, V = np.linalg.eigh(H)
    if w.min() >= MIN_EIG:
        return H
    return (V * np.maximum(w, MIN_EIG)) @ V.T


def sensitivities(sub: AgentSubproblem, report: SolveReport, rho: float = 0.0, sigma=1.0) -> Sensitivity:
    """Gradient, positive definite Hessian and active-constraint Jacobian at q^p.

    The local SQP's BFGS matrix approximates the Hessian of the augmented
    objective; the known proximal part rho*Sigma is removed before use.
    """
    q = report.x
    _, g = sub.objective(q)
    n = sub.n
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (n,))
    if report.hessian is None:
        H = np.eye(n)
    else:
        H = report.hessian - np.diag(rho * sigma)
    rows = []
    if report.active_ineq and sub.constraints is not None:
        _, J = sub.constraints(q)
        J = np.atleast_2d(J)
        rows.extend(J[i] for i in report.active_ineq)
    G_ineq = _independent_rows(np.array(rows)) if rows else np.zeros((0, n))
    eye = np.eye(n)
    rows.extend(eye[i] for i in report.active_bounds)
    G = _independent_rows(np.array(rows)) if rows else np.zeros((0, n))
    return Sensitivity(g=np.asarray(g, float), H=_regularize(H), G=G, G_ineq=G_ineq)


def _independent_rows(G):
    # greedy Gram-Schmidt keeps the first maximal independent subset
    basis = []
    keep = []
    for row in G:
        r = row.astype(float).copy()
        for b in basis:
            r -= (r @ b) * b
        nr = np.linalg.norm(r)
        if nr > 1e-10 * max(1.0, np.linalg.norm(row)):
            basis.append(r / nr)
            keep.append(row)
    return np.array(keep).reshape(-1, G.shape[1])


def coordination_step(sens: list[Sensitivity], q_local, lam, mu: float, q_total, bounds=None):
    """Coordination QP; returns (dq per agent, s, lambda_QP).

    Without ``bounds`` every active constraint is an equality and the QP is
    one KKT solve.  With ``bounds`` (a (lb, ub) pair per agent) the box stays
    an inequality, so the QP may release or add bounds itself; only the
    general active inequalities are pinned.
    """
    N = np.asarray(lam).size
    sizes = [sj.g.size for sj in sens]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    nq = int(offsets[-1])
    nz = nq + N
    H = np.zeros((nz, nz))
    g = np.zeros(nz)
    for j, sj in enumerate(sens):
        blk = slice(offsets[j], offsets[j + 1])
        H[blk, blk] = sj.H
        g[blk] = sj.g
    H[nq:, nq:] = mu * np.eye(N)
    g[nq:] = lam
    pinned = [sj.G if bounds is None or sj.G_ineq is None else sj.G_ineq for sj in sens]
    n_g = sum(Gj.shape[0] for Gj in pinned)
    A = np.zeros((N + n_g, nz))
    b = np.zeros(N + n_g)
    for j in range(len(sens)):
        A[:N, offsets[j]:offsets[j] + N] = np.eye(N)
    A[:N, nq:] = -np.eye(N)
    b[:N] = q_total - np.sum([np.asarray(v)[:N] for v in q_local], axis=0)
    r = N
    for j, Gj in enumerate(pinned):
        k = Gj.shape[0]
        A[r:r + k, offsets[j]:offsets[j + 1]] = Gj
        r += k
    if bounds is None:
        try:
            z, mult = solve_kkt(H, g, A, b, strict=False)
        except np.linalg.LinAlgError as exc:
            raise DegenerateCoordination("degenerate coordination: singular KKT system") from exc
    else:
        q_all = np.concatenate([np.asarray(v, float) for v in q_local])
        lb = np.concatenate([np.asarray(lo, float) for lo, _ in bounds] + [np.full(N, -np.inf)])
        ub = np.concatenate([np.asarray(hi, float) for _, hi in bounds] + [np.full(N, np.inf)])
        shift = np.concatenate([q_all, np.zeros(N)])
        rep = solve_qp(QpProblem(H=H, g=g, A_eq=A, b_eq=b, lb=lb - shift, ub=ub - shift),
                       tol=1e-12, x0=np.concatenate([np.zeros(nq), -b[:N]]))
        if not rep.success:
            raise DegenerateCoordination(f"coordination QP failed: {rep.status}")
        z, mult = rep.x, rep.eq_multipliers
    dq = [z[offsets[j]:offsets[j + 1]] for j in range(len(sens))]
    return dq, z[nq:], mult[:N]


def primal_dual_update(y, q_local, dq, lam, lam_qp, beta=(1.0, 1.0, 1.0)):
    """y+ = y + b1 (q - y) + b2 dq and lam+ = lam + b3 (lam_QP - lam)."""
    b1, b2, b3 = beta
    y_next = [yj + b1 * (qj - yj) + b2 * dqj for yj, qj, dqj in zip(y, q_local, dq)]
    lam_next = np.asarray(lam) + b3 * (np.asarray(lam_qp) - np.asarray(lam))
    return y_next, lam_next


def aladin_solve(
    subproblems: list[AgentSubproblem],
    q_total,
    config: AladinConfig | None = None,
    y0=None,
    lam0=None,
    hessians=None,
    record_trace: bool = False,
) -> AladinResult:
    """Run ALADIN until both step-2 residuals and every agent's dual
    residual drop below epsilon.

    ``hessians`` optionally warm-starts each agent's BFGS approximation of
    its own objective Hessian (not including the proximal term); agents
    that provide a curvature model use it instead.
    """
    config = config or AladinConfig()
    J = len(subproblems)
    if J == 0:
        raise ValueError("need at least one agent")
    N = subproblems[0].n_coupled
    if any(sp.n_coupled != N for sp in subproblems):
        raise ValueError("all agents must share the horizon length")
    q_total = np.broadcast_to(np.asarray(q_total, dtype=float), (N,)).copy()
    sigmas = [agent_sigma(config.sigma, sp) for sp in subproblems]
    if y0 is None:
        y = [_box_center(sp) for sp in subproblems]
    else:
        y = [np.asarray(v, dtype=float).copy() for v in y0]
    lam = np.zeros(N) if lam0 is None else np.asarray(lam0, dtype=float).copy()
    Bf = [None] * J if hessians is None else [None if h is None else np.array(h) for h in hessians]
    rho, mu = config.rho0, config.mu0
    t_nlp = [0.0] * J
    t_sens = [0.0] * J
    t_qp = 0.0
    trace = []
    prev_res = np.inf
    worse = 0
    converged = False
    best = None
    p = 0

    for p in range(config.max_iter + 1):
        reports = []
        for j, sp in enumerate(subproblems):
            h0 = None
            if sp.curvature is None and Bf[j] is not None:
                h0 = Bf[j] + np.diag(rho * sigmas[j])
            t0 = time.perf_counter()
            rep = local_step(sp, y[j], lam, rho, sigmas[j], hessian0=h0, tol=config.local_tol)
            t_nlp[j] += time.perf_counter() - t0
            reports.append(rep)
        q = [rep.x for rep in reports]
        coupling, primal = _residuals(q, y, q_total)
        if record_trace:
            trace.append(dict(p=p, coupling_residual=coupling, primal_residual=primal,
                              dual_residual=_dual_residual(q, y, rho, sigmas),
                              lambda_norm=float(np.linalg.norm(lam)),
                              t_nlp=sum(t_nlp), t_sens=sum(t_sens), t_qp=t_qp))
        if best is None or coupling < best[0]:
            best = (coupling, q, lam.copy(), reports, p, [v.copy() for v in y], rho)
        dual = _dual_residual(q, y, rho, sigmas)
        if (coupling <= config.epsilon and primal <= config.epsilon and dual <= config.epsilon
                and all(r.success for r in reports)):
            converged = True
            break
        if p == config.max_iter:
            break

        sens = []
        for j, (sp, rep) in enumerate(zip(subproblems, reports)):
            t0 = time.perf_counter()
            sj = sensitivities(sp, rep, rho, sigmas[j])
            t_sens[j] += time.perf_counter() - t0
            Bf[j] = sj.H
            sens.append(sj)

        t0 = time.perf_counter()
        dq, _, lam_qp = coordination_step(sens, q, lam, mu, q_total,
                                          bounds=[(sp.lb, sp.ub) for sp in subproblems])
        t_qp += time.perf_counter() - t0
        it = AladinIterate(y=y, lam=lam, q=q, sens=sens, p=p).advance(dq, lam_qp)
        y, lam = it.y, it.lam

        worse = worse + 1 if coupling > prev_res else 0
        prev_res = coupling
        if worse >= 3:
            rho = min(rho * config.growth, config.penalty_cap)
            mu = min(mu * config.growth, config.penalty_cap)
            worse = 0

    if converged:
        result_y = y
    else:
        coupling, q, lam, reports, p, result_y, rho = best
    return AladinResult(
        q=[np.array(v) for v in q],
        lam=lam,
        iterations=p,
        converged=converged,
        coupling_residual=_residuals(q, q, q_total)[0],
        t_nlp=t_nlp,
        t_sens=t_sens,
        t_qp=t_qp,
        local_reports=reports,
        hessians=Bf,
        y=[np.array(v) for v in result_y],
        rho=rho,
        sigma=sigmas,
        trace=trace,
    )


def write_trace(trace: list[dict], path) -> None:
    """Per-iteration trace of ``aladin_solve(..., record_trace=True)`` as CSV."""
    cols = ["p", "coupling_residual", "primal_residual", "dual_residual", "lambda_norm",
            "t_nlp", "t_sens", "t_qp"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        for row in trace:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
