"""Independent first-order optimality check.

Recomputes every residual from the problem callbacks and the returned
primal-dual pair; nothing is taken from the solver's own bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class KktResiduals:
    stationarity: float
    feasibility: float
    complementarity: float
    dual_sign: float

    def ok(self, tol: float) -> bool:
        return (
            self.stationarity <= 10 * tol
            and self.feasibility <= tol
            and self.complementarity <= tol
            and self.dual_sign <= tol
        )


def kkt_residuals(
    grad,
    x,
    lb,
    ub,
    bound_multipliers,
    h=None,
    jac=None,
    ineq_multipliers=None,
    eq=None,
    eq_jac=None,
    eq_multipliers=None,
    relative: bool = False,
) -> KktResiduals:
    """Residuals of the first-order conditions at a primal-dual pair.

    With ``relative`` the stationarity is divided by 1 + the largest term of
    the Lagrangian gradient and complementarity by 1 + the largest
    multiplier, which is the meaningful scale when penalties are large.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, float)
    w = np.zeros(n) if bound_multipliers is None else np.asarray(bound_multipliers, float)
    r = np.asarray(grad, float) + w
    big = max(np.abs(grad).max(initial=0.0), np.abs(w).max(initial=0.0))
    zmax = np.abs(w).max(initial=0.0)
    feas = [0.0]
    compl = [0.0]
    sign = [0.0]
    if h is not None and np.size(h):
        h = np.asarray(h, float)
        z = np.asarray(ineq_multipliers, float)
        Jz = np.asarray(jac, float).T @ z
        r = r + Jz
        big = max(big, np.abs(Jz).max(initial=0.0))
        zmax = max(zmax, np.abs(z).max(initial=0.0))
        feas.append(float(np.max(h)))
        compl.append(float(np.max(np.abs(z * h))))
        sign.append(float(np.max(-z)))
    if eq is not None and np.size(eq):
        r = r + np.asarray(eq_jac, float).T @ np.asarray(eq_multipliers, float)
        feas.append(float(np.max(np.abs(eq))))
    feas.append(float(np.max(np.maximum(lb - x, 0.0), initial=0.0)))
    feas.append(float(np.max(np.maximum(x - ub, 0.0), initial=0.0)))
    # positive w belongs to the upper bound, negative w to the lower bound
    gap_up = np.where(np.isfinite(ub), ub - x, np.inf)
    gap_lo = np.where(np.isfinite(lb), x - lb, np.inf)
    wp = np.maximum(w, 0.0)
    wn = np.maximum(-w, 0.0)
    with np.errstate(invalid="ignore"):
        cu = np.where(wp > 0, wp * gap_up, 0.0)
        cl = np.where(wn > 0, wn * gap_lo, 0.0)
    compl.append(float(np.max(np.concatenate([cu, cl]), initial=0.0)))
    stat = float(np.linalg.norm(r, np.inf)) if n else 0.0
    if relative:
        stat /= 1.0 + big
        compl = [c / (1.0 + zmax) for c in compl]
    return KktResiduals(
        stationarity=stat,
        feasibility=max(feas),
        complementarity=max(compl),
        dual_sign=max(sign),
    )
