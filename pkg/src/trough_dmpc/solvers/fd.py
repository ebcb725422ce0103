import numpy as np


def fd_gradient(f, x, h=1e-6):
    """Central-difference gradient of scalar ``f`` at ``x``."""
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (f(x + e) - f(x - e)) / (2 * h)
    return grad


def fd_jacobian(fun, x, h=1e-6):
    """Central-difference Jacobian of vector-valued ``fun``; rows are outputs."""
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(fun(x + e), float) - np.asarray(fun(x - e), float)) / (2 * h))
    return np.column_stack(cols) if cols else np.zeros((0, 0))
