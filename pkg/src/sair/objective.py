"""Fixed-beta objective, candidate scoring and analytic gradients.

For a dictionary state the objective is

    L = 1/2 sum_j d_j + 1/2 y^H C^{-1} y.

Adding an atom at frequency f with weight d changes it by

    dL(f, d) = 1/2 (d - |q|^2 / (1/d + s)),   q = phi^H C^{-1} y,  s = phi^H C^{-1} phi,

which is minimised over d > 0 at d = (|q| - 1)/s when |q| > 1, giving
dL = -(|q| - 1)^2 / (2 s).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .model import (
    DictionaryState,
    atom_derivative_matrix,
    atom_matrix,
    dense_covariance,
    grid_quadratics,
    quadratics,
    wrap_distance,
    wrap_freq,
)


@dataclass(frozen=True)
class CandidateScore:
    f: float
    d_hat: float
    delta: float
    q: complex = 0j
    s: float = 0.0
    index: int = -1


def objective(state: DictionaryState) -> float:
    return 0.5 * float(np.sum(state.weights)) + 0.5 * float(np.real(np.vdot(state.y, state.cinv_y)))


def delta_from_qs(q: complex, s: float, d: float) -> float:
    return 0.5 * (d - abs(q) ** 2 / (1.0 / d + s))


def delta_objective(f: float, d: float, state: DictionaryState) -> float:
    if not d > 0:
        raise ValueError("d must be positive")
    q, s = quadratics(state, f)
    return delta_from_qs(q, s, d)


def score_from_qs(f: float, q: complex, s: float) -> CandidateScore:
    aq = abs(q)
    if aq > 1.0:
        return CandidateScore(f=f, d_hat=(aq - 1.0) / s, delta=-((aq - 1.0) ** 2) / (2.0 * s), q=q, s=s)
    return CandidateScore(f=f, d_hat=0.0, delta=0.0, q=q, s=s)


def optimal_weight(f: float, state: DictionaryState) -> CandidateScore:
    f = wrap_freq(f)
    q, s = quadratics(state, f)
    return score_from_qs(f, q, s)


def select_candidate(state: DictionaryState, gamma: int, fast: bool = True) -> CandidateScore | None:
    """Best grid atom, or ``None`` (terminate) when no grid point lowers L.

    Ties go to the lowest grid index.
    """
    grid, q, s = grid_quadratics(state, gamma, fast=fast)
    aq = np.abs(q)
    excess = np.maximum(aq - 1.0, 0.0)
    delta = -(excess ** 2) / (2.0 * s)
    k = int(np.argmin(delta))  # argmin returns the first minimiser
    if not delta[k] < 0.0:
        return None
    return CandidateScore(
        f=float(grid[k]), d_hat=float(excess[k] / s[k]), delta=float(delta[k]),
        q=complex(q[k]), s=float(s[k]), index=k,
    )


def nearest_atom(state: DictionaryState, f: float) -> tuple[int, float]:
    """Index of and wrap distance to the dictionary atom closest to f (-1, inf if empty)."""
    if state.r == 0:
        return -1, np.inf
    dist = wrap_distance(state.freqs, f)
    j = int(np.argmin(dist))
    return j, float(dist[j])


# -- dense evaluation used by the refinement step -------------------------------------------

def evaluate(freqs, log_weights, beta, y, op, with_grad: bool = True):
    """Objective and gradient at ``(freqs, rho)`` with ``d = exp(rho)``, from a fresh Cholesky.

    Returns ``L`` or ``(L, g_f, g_rho)``.
    """
    freqs = np.asarray(freqs, dtype=float)
    d = np.exp(np.asarray(log_weights, dtype=float))
    C = dense_covariance(freqs, d, beta, op)
    factor = sla.cho_factor(C, lower=True, check_finite=False)
    u = sla.cho_solve(factor, y, check_finite=False)
    if np.finfo(float).eps * np.real(np.trace(C)) > 1e-14 * beta:
        # one refinement step with beta applied exactly
        A = atom_matrix(freqs, op)
        u = u + sla.cho_solve(factor, y - beta * u - (A * d) @ (A.conj().T @ u), check_finite=False)
    L = 0.5 * float(np.sum(d)) + 0.5 * float(np.real(np.vdot(y, u)))
    if not with_grad:
        return L
    g_f, g_rho = _gradient_terms(freqs, d, u, op)
    return L, g_f, g_rho


def _gradient_terms(freqs, d, u, op):
    # dC/df_j = d_j (phi' phi^H + phi phi'^H);  d(y^H C^-1 y) = -u^H dC u
    q = atom_matrix(freqs, op).conj().T @ u
    p = atom_derivative_matrix(freqs, op).conj().T @ u
    g_f = -d * np.real(np.conj(p) * q)
    g_rho = 0.5 * d * (1.0 - np.abs(q) ** 2)
    return g_f, g_rho


def objective_gradient(state: DictionaryState) -> tuple[np.ndarray, np.ndarray]:
    """``(dL/df, dL/drho)`` with ``rho = log d``, using the cached ``C^{-1} y``."""
    if state.r < 1:
        raise ValueError("gradient needs at least one atom")
    return _gradient_terms(state.freqs, state.weights, state.cinv_y, state.op)
