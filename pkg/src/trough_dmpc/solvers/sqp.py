"""Small dense SQP: damped BFGS Hessian, l1-merit backtracking.

Handles  min f(x)  s.t.  h(x) <= 0,  lb <= x <= ub.  Iterates stay inside
the box.  When the current point violates h the subproblem switches to the
elastic form, so no separate feasibility phase is needed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .qp import QpProblem, SolveReport, solve_qp

ObjectiveFn = Callable[[np.ndarray], tuple[float, np.ndarray]]
ConstraintFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]

ACTIVE_TOL = 1e-6
STALL_WINDOW = 3
MAX_RESEEDS = 10


@dataclass
class NlpProblem:
    """``objective(x) -> (f, grad)``; ``constraints(x) -> (h, jac)`` with h <= 0.

    ``curvature(x)`` optionally supplies a positive semidefinite Hessian
    model; BFGS starts from it and falls back to it on resets.
    """

    objective: ObjectiveFn
    n: int
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    constraints: ConstraintFn | None = None
    curvature: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        self.lb = np.full(self.n, -np.inf) if self.lb is None else np.asarray(self.lb, float)
        self.ub = np.full(self.n, np.inf) if self.ub is None else np.asarray(self.ub, float)
        if np.any(self.lb > self.ub):
            raise ValueError("empty box: lb > ub")

    def eval_constraints(self, x):
        if self.constraints is None:
            return np.zeros(0), np.zeros((0, self.n))
        h, J = self.constraints(x)
        return np.atleast_1d(np.asarray(h, float)), np.atleast_2d(np.asarray(J, float)).reshape(-1, self.n)


def _kkt(g, h, J, kappa, w, x, lb, ub):
    """KKT residual; stationarity and complementarity relative to the gradient
    and multiplier scale, so large penalty terms do not set a roundoff floor."""
    Jk = J.T @ kappa if h.size else np.zeros_like(g)
    stat = g + Jk + w
    scale = 1.0 + max(np.abs(g).max(initial=0.0), np.abs(Jk).max(initial=0.0), np.abs(w).max(initial=0.0))
    res = float(np.linalg.norm(stat, np.inf)) / scale if g.size else 0.0
    feas = float(max(0.0, h.max())) if h.size else 0.0
    kscale = 1.0 + np.abs(kappa).max(initial=0.0)
    compl = float(np.max(np.abs(kappa * h))) / kscale if h.size else 0.0
    gap_up = np.where((w > 0) & np.isfinite(ub), w * np.where(np.isfinite(ub), ub - x, 0.0), 0.0)
    gap_lo = np.where((w < 0) & np.isfinite(lb), -w * np.where(np.isfinite(lb), x - lb, 0.0), 0.0)
    bcompl = float(np.max(np.concatenate([gap_up, gap_lo]), initial=0.0)) / (1.0 + np.abs(w).max(initial=0.0))
    return max(res, feas, compl, bcompl)


def _active(x, h, lb, ub):
    act_in = [int(i) for i in np.flatnonzero(np.abs(h) <= ACTIVE_TOL)] if h.size else []
    near_ub = np.isfinite(ub) & (np.abs(x - ub) <= ACTIVE_TOL * (1 + np.abs(ub)))
    near_lb = np.isfinite(lb) & (np.abs(x - lb) <= ACTIVE_TOL * (1 + np.abs(lb)))
    return act_in, [int(i) for i in np.flatnonzero(near_ub | near_lb)]


def solve_nlp(
    problem: NlpProblem,
    x0,
    tol: float = 1e-8,
    max_iter: int = 200,
    hessian0: np.ndarray | None = None,
) -> SolveReport:
    n = problem.n
    lb, ub = problem.lb, problem.ub
    x = np.clip(np.asarray(x0, dtype=float).copy(), lb, ub)
    f, g = problem.objective(x)
    h, J = problem.eval_constraints(x)
    m = h.size
    if hessian0 is not None:
        B = np.array(hessian0, dtype=float)
    elif problem.curvature is not None:
        B = _model(problem, x, np.eye(n))
    else:
        B = np.eye(n)
    scaled = hessian0 is not None or problem.curvature is not None
    history = []
    reseeds = 0
    nu = 0.0
    curvature_fails = 0
    resets = 0
    best = None
    kappa = np.zeros(m)
    w = np.zeros(n)
    kkt = np.inf

    for it in range(1, max_iter + 1):
        elastic = m > 0 and h.max() > 0
        if elastic:
            nu = max(nu, 10.0 * (1.0 + np.abs(g).max()))
            qp = QpProblem(
                H=np.block([[B, np.zeros((n, m))], [np.zeros((m, n)), 1e-8 * np.eye(m)]]),
                g=np.concatenate([g, np.full(m, nu)]),
                A_in=np.hstack([J, -np.eye(m)]),
                b_in=-h,
                lb=np.concatenate([lb - x, np.zeros(m)]),
                ub=np.concatenate([ub - x, np.full(m, np.inf)]),
            )
            rep = solve_qp(qp, tol=1e-12, x0=np.concatenate([np.zeros(n), np.maximum(h, 0.0)]))
            d = rep.x[:n] if rep.success else None
            w_qp = rep.bound_multipliers[:n] if rep.success else None
        else:
            qp = QpProblem(H=B, g=g, A_in=J if m else None, b_in=-h if m else None, lb=lb - x, ub=ub - x)
            rep = solve_qp(qp, tol=1e-12, x0=np.zeros(n))
            d = rep.x if rep.success else None
            w_qp = rep.bound_multipliers if rep.success else None
        if d is None:
            if resets < 3:
                B = _reset(problem, x, B)
                resets += 1
                continue
            break
        kappa = rep.ineq_multipliers if m else np.zeros(0)
        w = w_qp
        kkt = _kkt(g, h, J, kappa, w, x, lb, ub)
        # a null step at a feasible point is stationary to working precision
        # even when large proximal terms keep the residual above tol
        null_step = not elastic and np.abs(d).max(initial=0.0) <= 1e-15 * max(1.0, np.abs(x).max(initial=0.0))
        if kkt <= tol or (null_step and kkt <= 1e3 * tol):
            return _report(x, f, h, lb, ub, kappa, w, it, "success", kkt, B)
        history.append(kkt)
        if problem.curvature is not None and reseeds < MAX_RESEEDS and len(history) > STALL_WINDOW \
                and kkt > 0.5 * history[-1 - STALL_WINDOW]:
            # BFGS is not tracking a sharp change of curvature: re-seed and
            # solve the subproblem again from the same point
            B = _model(problem, x, B)
            history.clear()
            reseeds += 1
            continue

        if m:
            nu = max(nu, 1.5 * np.abs(kappa).max(initial=0.0) + 1e-12)
        viol = np.maximum(h, 0.0).sum() if m else 0.0
        phi = f + nu * viol
        if best is None or phi < best[0]:
            best = (phi, x.copy(), f, h.copy(), kappa.copy(), w.copy(), kkt)
        lin_viol = np.maximum(h + J @ d, 0.0).sum() if m else 0.0
        dphi = g @ d + nu * (lin_viol - viol)

        alpha = 1.0
        accepted = False
        for _ in range(40):
            xt = np.clip(x + alpha * d, lb, ub)
            ft, gt = problem.objective(xt)
            ht, Jt = problem.eval_constraints(xt)
            phit = ft + nu * (np.maximum(ht, 0.0).sum() if m else 0.0)
            # the last clause accepts steps whose merit change is pure roundoff
            if (phit <= phi + 1e-4 * alpha * min(dphi, 0.0) or (dphi >= 0 and phit <= phi)
                    or abs(phit - phi) <= 1e-14 * max(1.0, abs(phi))):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if resets < 3:
                B = _reset(problem, x, B)
                resets += 1
                continue
            break

        s = xt - x
        y = (gt + (Jt.T @ kappa if m else 0.0)) - (g + (J.T @ kappa if m else 0.0))
        x, f, g, h, J = xt, ft, gt, ht, Jt
        sy = float(s @ y)
        if not scaled and sy > 0:
            B = (y @ y) / sy * np.eye(n)
            scaled = True
            continue
        B, ok = _damped_bfgs(B, s, y)
        curvature_fails = 0 if ok else curvature_fails + 1
        if curvature_fails >= 2:
            B = _reset(problem, x, B)
            curvature_fails = 0

    if best is None or (kkt < np.inf and _kkt(g, h, J, kappa, w, x, lb, ub) <= best[6]):
        return _report(x, f, h, lb, ub, kappa, w, it, "max_iter", kkt, B)
    _, xb, fb, hb, kb, wb, kktb = best
    return _report(xb, fb, hb, lb, ub, kb, wb, it, "max_iter", kktb, B)


def _model(problem, x, B):
    H = np.asarray(problem.curvature(x), dtype=float)
    H = 0.5 * (H + H.T)
    w = np.linalg.eigvalsh(H)
    if w.min() < 1e-8 * max(1.0, w.max()):
        # keep the model safely positive definite for the QP subproblem
        H = H + (1e-8 * max(1.0, w.max()) - min(w.min(), 0.0)) * np.eye(H.shape[0])
    return H


def _reset(problem, x, B):
    return _model(problem, x, B) if problem.curvature is not None else _scaled_identity(B)


def _scaled_identity(B):
    n = B.shape[0]
    gamma = max(np.trace(B) / n, 1e-8)
    return gamma * np.eye(n)


def _damped_bfgs(B, s, y):
    """Powell-damped BFGS update. Second value reports whether s'y > 0 held."""
    Bs = B @ s
    sBs = float(s @ Bs)
    sy = float(s @ y)
    if sBs <= 1e-300:
        return B, sy > 0
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        r = theta * y + (1 - theta) * Bs
    else:
        r = y
    sr = float(s @ r)
    B = B - np.outer(Bs, Bs) / sBs + np.outer(r, r) / sr
    B = 0.5 * (B + B.T)
    return B, sy > 0


def _report(x, f, h, lb, ub, kappa, w, it, status, kkt, B):
    act_in, act_b = _active(x, h, lb, ub)
    return SolveReport(
        x=x,
        status=status,
        iterations=it,
        ineq_multipliers=np.asarray(kappa, float),
        bound_multipliers=np.asarray(w, float),
        active_ineq=act_in,
        active_bounds=act_b,
        kkt_residual=kkt,
        hessian=B,
        objective=float(f),
    )
