"""Dense convex QP by the primal active-set method.

    minimize    0.5 x'Hx + g'x
    subject to  A_eq x  = b_eq
                A_in x <= b_in
                lb <= x <= ub

Multipliers follow the convention  Hx + g + A_eq'y + A_in'z + w = 0,  so
inequality multipliers z are non-negative at a solution and the bound
multiplier w_i is positive on an active upper bound, negative on a lower one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import linprog


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.g = np.atleast_1d(np.asarray(self.g, dtype=float))
        n = self.g.size
        if self.H.shape != (n, n):
            raise ValueError(f"H has shape {self.H.shape}, expected {(n, n)}")
        if not np.allclose(self.H, self.H.T, rtol=0, atol=1e-10 * max(1.0, np.abs(self.H).max())):
            raise ValueError("H must be symmetric")
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "A_eq")
        self.A_in, self.b_in = _rows(self.A_in, self.b_in, n, "A_in")
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, float).copy()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, float).copy()
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("bounds must have the dimension of g")

    @property
    def n(self) -> int:
        return self.g.size


def _rows(A, b, n, name):
    if A is None or np.size(A) == 0:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if A.shape[1] != n or A.shape[0] != b.size:
        raise ValueError(f"{name} has inconsistent shape {A.shape} for n={n}, rhs {b.size}")
    return A, b


@dataclass
class SolveReport:
    x: np.ndarray
    status: str
    iterations: int = 0
    eq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ineq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bound_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    active_ineq: list[int] = field(default_factory=list)
    active_bounds: list[int] = field(default_factory=list)
    kkt_residual: float = np.inf
    hessian: np.ndarray | None = None
    objective: float = np.nan

    @property
    def success(self) -> bool:
        return self.status == "success"

    @property
    def active(self) -> list[tuple[str, int]]:
        return [("ineq", i) for i in self.active_ineq] + [("bound", i) for i in self.active_bounds]


def solve_kkt(H, g, A, b, strict: bool = True):
    """Solve min 0.5x'Hx + g'x s.t. Ax = b with one symmetric factorization.

    Returns (x, y) with Hx + g + A'y = 0.  Raises LinAlgError if the KKT
    matrix is singular.  With ``strict=False`` an ill-conditioned but
    solvable system is accepted when its residual is negligible.
    """
    n = g.size
    m = b.size
    if m == 0:
        K, rhs = H, -g
    else:
        K = np.zeros((n + m, n + m))
        K[:n, :n] = H
        K[:n, n:] = A.T
        K[n:, :n] = A
        rhs = np.concatenate([-g, b])
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            sol = scipy.linalg.solve(K, rhs, assume_a="sym", check_finite=False)
        except scipy.linalg.LinAlgWarning as exc:
            if strict:
                raise np.linalg.LinAlgError(str(exc)) from exc
            # badly scaled but possibly regular: accept if the residual is small
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            sol = scipy.linalg.solve(K, rhs, check_finite=False)
            scale = np.abs(K).max() * np.abs(sol).max(initial=0.0) + np.abs(rhs).max(initial=0.0)
            if not np.all(np.isfinite(sol)) or np.abs(K @ sol - rhs).max() > 1e-10 * max(scale, 1.0):
                raise np.linalg.LinAlgError(str(exc)) from exc
    if not np.all(np.isfinite(sol)):
        raise np.linalg.LinAlgError("non-finite KKT solution")
    return sol[:n], sol[n:]


def _stacked_inequalities(prob: QpProblem):
    """Inequality rows plus finite bounds written as rows, with bookkeeping."""
    n = prob.n
    eye = np.eye(n)
    up = np.flatnonzero(np.isfinite(prob.ub))
    lo = np.flatnonzero(np.isfinite(prob.lb))
    C = np.vstack([prob.A_in, eye[up], -eye[lo]])
    d = np.concatenate([prob.b_in, prob.ub[up], -prob.lb[lo]])
    return C, d, up, lo


def _phase_one(prob: QpProblem, C, d, x0, tol):
    if x0 is not None:
        x = np.asarray(x0, dtype=float)
    elif prob.A_eq.shape[0]:
        x = np.linalg.lstsq(prob.A_eq, prob.b_eq, rcond=None)[0]
    else:
        x = np.zeros(prob.n)
    if prob.A_eq.shape[0] == 0:
        x = np.clip(x, prob.lb, prob.ub)
    eq_ok = np.all(np.abs(prob.A_eq @ x - prob.b_eq) <= tol * (1 + np.abs(prob.b_eq)))
    if eq_ok and np.all(C @ x - d <= tol * (1 + np.abs(d))):
        return x
    res = linprog(
        np.zeros(prob.n),
        A_ub=prob.A_in if prob.A_in.shape[0] else None,
        b_ub=prob.b_in if prob.A_in.shape[0] else None,
        A_eq=prob.A_eq if prob.A_eq.shape[0] else None,
        b_eq=prob.b_eq if prob.A_eq.shape[0] else None,
        bounds=list(zip(np.where(np.isfinite(prob.lb), prob.lb, None),
                        np.where(np.isfinite(prob.ub), prob.ub, None))),
        method="highs",
    )
    if res.status != 0:
        return None
    return res.x


def _independent(rows: np.ndarray, cand: np.ndarray) -> bool:
    if rows.shape[0] == 0:
        return np.linalg.norm(cand) > 0
    M = np.vstack([rows, cand])
    return np.linalg.matrix_rank(M) == M.shape[0]


def _subspace_step(H, c, A):
    """Minimizing step of the QP model on null(A) plus working-set multipliers.

    Null-space form: better conditioned than the full KKT matrix when H and
    A have very different scales.  When the reduced Hessian is singular the
    step is a descent direction of zero curvature and y is None.
    """
    n = c.size
    r = A.shape[0]
    if r:
        Q, R = np.linalg.qr(A.T, mode="complete")
        R1 = R[:r]
    else:
        Q, R1 = np.eye(n), np.zeros((0, 0))
    Q1, Z = Q[:, :r], Q[:, r:]
    if Z.shape[1]:
        Hz = Z.T @ H @ Z
        Hz = 0.5 * (Hz + Hz.T)
        try:
            L = np.linalg.cholesky(Hz)
        except np.linalg.LinAlgError:
            L = None
        if L is None or np.diag(L).min() ** 2 <= 1e-13 * max(1.0, np.abs(Hz).max()):
            p = _null_descent(H, c, A)
            if p is not None:
                return p, None
            pz = -np.linalg.lstsq(Hz, Z.T @ c, rcond=None)[0]
        else:
            pz = -scipy.linalg.cho_solve((L, True), Z.T @ c)
        p = Z @ pz
    else:
        p = np.zeros(n)
    if r == 0:
        return p, np.zeros(0)
    # A' y = -(c + H p); rows of the working set are kept independent
    y = -scipy.linalg.solve_triangular(R1, Q1.T @ (c + H @ p), lower=False, check_finite=False)
    return p, y


def _null_descent(H, c, A):
    """Direction of zero curvature and descent in null(A), or None."""
    n = c.size
    Z = scipy.linalg.null_space(A) if A.shape[0] else np.eye(n)
    if Z.shape[1] == 0:
        return None
    Hz = Z.T @ H @ Z
    w, V = np.linalg.eigh(Hz)
    flat = V[:, w <= 1e-12 * max(1.0, np.abs(w).max())]
    if flat.shape[1] == 0:
        return None
    p = -Z @ (flat @ (flat.T @ (Z.T @ c)))
    if np.linalg.norm(p) <= 1e-14 * max(1.0, np.linalg.norm(c)):
        return None
    return p


def solve_qp(
    problem: QpProblem,
    tol: float = 1e-9,
    x0=None,
    working: list[int] | None = None,
    max_iter: int | None = None,
) -> SolveReport:
    prob = problem
    n = prob.n
    H, g = prob.H, prob.g
    Aeq, beq = prob.A_eq, prob.b_eq
    me = beq.size
    if me == 0 and prob.b_in.size == 0 and n:
        rep = _box_qp(prob, tol, x0, max_iter or 10 * n + 50)
        if rep is not None:
            return rep
    C, d, up, lo = _stacked_inequalities(prob)
    mi_user = prob.b_in.size
    m = d.size

    if m == 0:
        try:
            x, y = solve_kkt(H, g, Aeq, beq)
        except np.linalg.LinAlgError:
            return _singular_equality(prob)
        return _finish(prob, x, y, np.zeros(0), [], 1, up, lo, tol)

    x = _phase_one(prob, C, d, x0, tol)
    if x is None:
        return SolveReport(x=np.zeros(n) if x0 is None else np.asarray(x0, float), status="infeasible")

    act_tol = tol * (1 + np.abs(d))
    slack = d - C @ x
    W: list[int] = []
    basis = Aeq.copy()
    candidates = working if working is not None else list(np.flatnonzero(slack <= act_tol))
    for i in candidates:
        if 0 <= i < m and slack[i] <= act_tol[i] and _independent(basis, C[i]):
            W.append(int(i))
            basis = np.vstack([basis, C[i]])

    max_iter = max_iter or 10 * (n + m) + 50
    scale = max(1.0, np.abs(H).max(), np.abs(g).max())
    # after an unblocked full step x minimizes over the working set, so the
    # next pass only needs the multipliers (the recomputed step is roundoff)
    at_min = False
    for it in range(1, max_iter + 1):
        AW = np.vstack([Aeq, C[W]]) if W else Aeq
        c = H @ x + g
        p, y = _subspace_step(H, c, AW)
        if y is not None and (at_min or np.linalg.norm(p, np.inf) <= tol * max(1.0, np.linalg.norm(x, np.inf))):
            zW = y[me:]
            if zW.size == 0 or zW.min() >= -tol * scale:
                z = np.zeros(m)
                z[W] = np.maximum(zW, 0.0) if zW.size else zW
                return _finish(prob, x, y[:me], z, W, it, up, lo, tol, C=C, d=d, mi_user=mi_user)
            W.pop(int(np.argmin(zW)))
            at_min = False
            continue
        Cp = C @ p
        alpha, block = 1.0 if y is not None else np.inf, None
        inW = np.zeros(m, dtype=bool)
        inW[W] = True
        mask = (~inW) & (Cp > 1e-14 * np.maximum(1.0, np.abs(C).max(axis=1)) * np.linalg.norm(p))
        if np.any(mask):
            idx = np.flatnonzero(mask)
            ratios = np.maximum(d[idx] - C[idx] @ x, 0.0) / Cp[idx]
            j = int(np.argmin(ratios))
            if ratios[j] < alpha:
                alpha, block = ratios[j], int(idx[j])
        if not np.isfinite(alpha):
            return SolveReport(x=x, status="unbounded", iterations=it)
        x = x + alpha * p
        at_min = block is None and y is not None
        if block is not None:
            W.append(block)
    return SolveReport(x=x, status="max_iter", iterations=max_iter)


def _box_qp(prob: QpProblem, tol, x0, max_iter):
    """Primal active set on bounds only; None if H is not positive definite."""
    H, g, lb, ub = prob.H, prob.g, prob.lb, prob.ub
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        return None
    n = g.size
    x = np.clip(np.zeros(n) if x0 is None else np.asarray(x0, float), lb, ub)
    grad = H @ x + g
    fixed = ((x <= lb) & (grad > 0)) | ((x >= ub) & (grad < 0))
    scale = max(1.0, np.abs(H).max(), np.abs(g).max())
    for it in range(1, max_iter + 1):
        free = ~fixed
        p = np.zeros(n)
        if free.any():
            p[free] = np.linalg.solve(H[np.ix_(free, free)], -grad[free])
        alpha, block = 1.0, -1
        up = free & (p > 0) & np.isfinite(ub)
        down = free & (p < 0) & np.isfinite(lb)
        for mask, bound in ((up, ub), (down, lb)):
            if mask.any():
                idx = np.flatnonzero(mask)
                r = np.maximum((bound[idx] - x[idx]) / p[idx], 0.0)
                j = int(np.argmin(r))
                if r[j] < alpha:
                    alpha, block = r[j], int(idx[j])
        x = x + alpha * p
        if block >= 0:
            x[block] = ub[block] if p[block] > 0 else lb[block]
            fixed[block] = True
            grad = H @ x + g
            continue
        x = np.clip(x, lb, ub)
        grad = H @ x + g
        # released bound: the one whose multiplier has the wrong sign the most
        wrong = np.where(fixed & (x <= lb), -grad, 0.0) + np.where(fixed & (x >= ub), grad, 0.0)
        j = int(np.argmax(wrong))
        if wrong[j] > tol * scale:
            fixed[j] = False
            continue
        w = np.where(fixed, -grad, 0.0)
        at_ub = fixed & (x >= ub)
        at_lb = fixed & (x <= lb)
        w = np.where(at_ub, np.maximum(w, 0.0), np.where(at_lb, np.minimum(w, 0.0), 0.0))
        act_b = [int(i) for i in range(n)
                 if (np.isfinite(ub[i]) and abs(x[i] - ub[i]) <= 1e-6 * (1 + abs(ub[i])))
                 or (np.isfinite(lb[i]) and abs(x[i] - lb[i]) <= 1e-6 * (1 + abs(lb[i])))]
        return SolveReport(
            x=x,
            status="success",
            iterations=it,
            eq_multipliers=np.zeros(0),
            ineq_multipliers=np.zeros(0),
            bound_multipliers=w,
            active_ineq=[],
            active_bounds=act_b,
            kkt_residual=float(np.linalg.norm(grad + w, np.inf)),
            objective=float(0.5 * x @ H @ x + g @ x),
        )
    return SolveReport(x=x, status="max_iter", iterations=max_iter)


def _singular_equality(prob: QpProblem) -> SolveReport:
    n = prob.n
    if prob.b_eq.size:
        xe = np.linalg.lstsq(prob.A_eq, prob.b_eq, rcond=None)[0]
        if np.linalg.norm(prob.A_eq @ xe - prob.b_eq) > 1e-9 * (1 + np.linalg.norm(prob.b_eq)):
            return SolveReport(x=xe, status="infeasible")
    p = _null_descent(prob.H, prob.g, prob.A_eq)
    if p is not None:
        return SolveReport(x=np.zeros(n), status="unbounded")
    return SolveReport(x=np.zeros(n), status="singular")


def _finish(prob, x, y_eq, z, W, it, up, lo, tol, C=None, d=None, mi_user=None):
    n = prob.n
    mi_user = prob.b_in.size if mi_user is None else mi_user
    z_in = z[:mi_user] if z.size else np.zeros(mi_user)
    w = np.zeros(n)
    if z.size:
        w[up] += z[mi_user:mi_user + up.size]
        w[lo] -= z[mi_user + up.size:]
    act_in = [int(i) for i in W if i < mi_user]
    act_b = sorted({int(i) for i in range(n)
                    if (np.isfinite(prob.ub[i]) and abs(x[i] - prob.ub[i]) <= 1e-6 * (1 + abs(prob.ub[i])))
                    or (np.isfinite(prob.lb[i]) and abs(x[i] - prob.lb[i]) <= 1e-6 * (1 + abs(prob.lb[i])))})
    grad = prob.H @ x + prob.g
    stat = grad + prob.A_eq.T @ y_eq + prob.A_in.T @ z_in + w
    res = float(np.linalg.norm(stat, np.inf)) if n else 0.0
    return SolveReport(
        x=x,
        status="success",
        iterations=it,
        eq_multipliers=np.asarray(y_eq, dtype=float),
        ineq_multipliers=z_in,
        bound_multipliers=w,
        active_ineq=act_in,
        active_bounds=act_b,
        kkt_residual=res,
        objective=float(0.5 * x @ prob.H @ x + prob.g @ x),
    )
