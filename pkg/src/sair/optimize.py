"""Damped BFGS with a backtracking (Armijo) line search.

Works on the inverse-Hessian approximation H. When the measured curvature
``s^T y`` falls below ``0.2 s^T B s`` the secant pair is blended with the model
curvature (Powell damping) so that H stays positive definite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class BFGSResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    evaluations: int
    damped_updates: int
    status: str


def damped_bfgs(fun_grad, x0, H0=None, max_iters=20, c1=1e-4, shrink=0.5,
                max_backtracks=50, step_cap=None, rtol=1e-16, damping=0.2):
    """Minimise ``fun_grad(x) -> (f, g)``.

    ``step_cap`` is an optional per-coordinate bound on ``|x_new - x|``; a
    search direction exceeding it is scaled down as a whole before the line
    search. Returns the best iterate found; the objective never increases.
    """
    x = np.array(x0, dtype=float)
    f, g = fun_grad(x)
    nfev = 1
    k = x.size
    H0 = np.eye(k) if H0 is None else np.array(H0, dtype=float)
    H = H0.copy()
    n_damped = 0
    status = "max_iters"
    it = 0
    for it in range(1, max_iters + 1):
        p = -H @ g
        slope = float(g @ p)
        if not slope < 0.0:
            H = H0.copy()
            p = -H @ g
            slope = float(g @ p)
            if not slope < 0.0:
                status = "stationary"
                it -= 1
                break
        if -slope <= rtol * max(1.0, abs(f)):
            status = "converged"
            it -= 1
            break
        pscale = 1.0
        if step_cap is not None:
            ratio = np.max(np.abs(p) / step_cap)
            if ratio > 1.0:
                pscale = 1.0 / ratio
                p = p * pscale
                slope = slope * pscale

        alpha = 1.0
        accepted = False
        for _ in range(max_backtracks):
            x_new = x + alpha * p
            try:
                f_new, g_new = fun_grad(x_new)
            except np.linalg.LinAlgError:
                f_new, g_new = np.inf, None
            nfev += 1
            if np.isfinite(f_new) and f_new <= f + c1 * alpha * slope:
                accepted = True
                break
            alpha *= shrink
        if not accepted or not f_new < f:
            status = "line_search"
            break

        s = x_new - x
        yv = g_new - g
        # B p_unscaled = -g, since H = B^{-1}
        Bs = -alpha * pscale * g
        sBs = float(s @ Bs)
        sy = float(s @ yv)
        if sy < damping * sBs:
            theta = (1.0 - damping) * sBs / (sBs - sy)
            yv = theta * yv + (1.0 - theta) * Bs
            sy = float(s @ yv)
            n_damped += 1
        x, f, g = x_new, f_new, g_new
        if sy > 0.0:
            rho = 1.0 / sy
            V = np.eye(k) - rho * np.outer(s, yv)
            H = V @ H @ V.T + rho * np.outer(s, s)
            H = 0.5 * (H + H.T)
    return BFGSResult(x=x, fun=f, grad=g, iterations=it, evaluations=nfev,
                      damped_updates=n_damped, status=status)


def fd_hessian(grad, x, steps):
    """Central-difference Hessian of an analytic gradient, symmetrised."""
    x = np.asarray(x, dtype=float)
    k = x.size
    Hs = np.empty((k, k))
    for i in range(k):
        e = np.zeros(k)
        e[i] = steps[i]
        Hs[:, i] = (grad(x + e) - grad(x - e)) / (2.0 * steps[i])
    return 0.5 * (Hs + Hs.T)


def inverse_from_hessian(Hs, floor=1e-12):
    """Inverse of the absolute-eigenvalue modification of a symmetric matrix."""
    w, V = np.linalg.eigh(Hs)
    top = max(np.max(np.abs(w)), 1e-300)
    w = np.maximum(np.abs(w), floor * top)
    return (V / w) @ V.T
