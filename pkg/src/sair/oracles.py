"""Independent numerical oracles.

Everything here uses dense factorizations and scalar searches only; nothing
is shared with the cached/Woodbury/FFT fast paths that these functions check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .model import DictionaryState, MeasurementOperator, add_atom, state_init, wrap_freq

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# -- dense objective and quadratics ---------------------------------------------------------

def _dense_atoms(freqs, op: MeasurementOperator) -> np.ndarray:
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    A = np.empty((op.m, freqs.size), dtype=complex)
    for j, f in enumerate(freqs):
        A[:, j] = np.cos(2 * np.pi * f * op.indices) - 1j * np.sin(2 * np.pi * f * op.indices)
    return A


def _dense_C(freqs, weights, beta, op):
    A = _dense_atoms(freqs, op)
    C = beta * np.eye(op.m, dtype=complex)
    for j in range(A.shape[1]):
        C += weights[j] * np.outer(A[:, j], A[:, j].conj())
    return C


def _dense_solve(freqs, weights, beta, op, B, steps=3):
    """LU solve of C X = B, refined with residuals ``B - beta X - sum d_j a_j a_j^H X``."""
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    A = _dense_atoms(freqs, op)
    lu = sla.lu_factor(_dense_C(freqs, weights, beta, op))
    X = sla.lu_solve(lu, B)
    for _ in range(steps):
        R = B - beta * X
        for j in range(A.shape[1]):
            R -= weights[j] * np.multiply.outer(A[:, j], A[:, j].conj() @ X)
        X = X + sla.lu_solve(lu, R)
    return X


def dense_objective(freqs, weights, beta, y, op: MeasurementOperator) -> float:
    """1/2 sum d + 1/2 y^H C^{-1} y with C built and solved densely."""
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    y = np.asarray(y, dtype=complex)
    u = _dense_solve(freqs, weights, beta, op, y)
    return 0.5 * float(np.sum(weights)) + 0.5 * float(np.real(np.vdot(y, u)))


def dense_state_objective(state: DictionaryState) -> float:
    return dense_objective(state.freqs, state.weights, state.beta, state.y, state.op)


def dense_quadratics(f, state: DictionaryState) -> tuple[complex, float]:
    phi = _dense_atoms([f], state.op)[:, 0]
    sol = _dense_solve(state.freqs, state.weights, state.beta, state.op,
                       np.column_stack([state.y, phi]))
    return complex(np.vdot(phi, sol[:, 0])), float(np.real(np.vdot(phi, sol[:, 1])))


def inverse_residual(state: DictionaryState) -> float:
    """max |cinv C - I| against the densely rebuilt covariance."""
    C = _dense_C(state.freqs, state.weights, state.beta, state.op)
    return float(np.max(np.abs(state.cinv @ C - np.eye(state.m))))


# -- limit of x^H (T + beta I)^{-1} x as beta -> 0 -----------------------------------------

@dataclass
class LimitProbeReport:
    beta_sequence: np.ndarray
    values: np.ndarray
    verdict: str                      # "converged", "diverging" or "inconclusive"
    limit: float | None = None
    pinv_value: float | None = None


def lemma3_limit_probe(T, x, betas=None, rtol=1e-6, ratio_tol=0.10) -> LimitProbeReport:
    """Classify ``beta -> x^H (T + beta I)^{-1} x`` as convergent or c/beta-divergent."""
    T = np.asarray(T, dtype=complex)
    x = np.asarray(x, dtype=complex).reshape(-1)
    if T.shape != (x.size, x.size):
        raise ValueError("T and x sizes disagree")
    if np.max(np.abs(T - T.conj().T)) > 1e-10 * max(1.0, np.max(np.abs(T))):
        raise ValueError("T is not Hermitian")
    w, V = np.linalg.eigh(T)
    scale = max(1.0, float(np.max(np.abs(w))))
    if w[0] < -1e-10 * scale:
        raise ValueError(f"T is not PSD (min eigenvalue {w[0]:.3e})")
    betas = np.logspace(-2, -10, 9) if betas is None else np.asarray(betas, dtype=float)
    if np.any(np.diff(betas) >= 0) or np.any(betas <= 0):
        raise ValueError("betas must be positive and strictly decreasing")

    n = x.size
    values = np.array([
        float(np.real(np.vdot(x, sla.solve(T + b * np.eye(n), x, assume_a="her")))) for b in betas
    ])
    keep = w > 1e-10 * scale
    c = V[:, keep].conj().T @ x
    pinv_value = float(np.sum(np.abs(c) ** 2 / w[keep]))

    v1, v2 = values[-2], values[-1]
    growth = v2 / v1
    expected = betas[-2] / betas[-1]
    if abs(v2 - v1) <= rtol * abs(v2) and abs(v2 - pinv_value) <= rtol * max(abs(pinv_value), 1e-300):
        verdict, limit = "converged", v2
    elif abs(growth - expected) <= ratio_tol * expected:
        verdict, limit = "diverging", None
    else:
        verdict, limit = "inconclusive", None
    return LimitProbeReport(betas, values, verdict, limit, pinv_value)


def in_column_space(T, x, tol=1e-10) -> bool:
    """Membership by projection residual onto range(T), via SVD."""
    U, sv, _ = np.linalg.svd(np.asarray(T, dtype=complex))
    rank = int(np.sum(sv > 1e-10 * max(sv[0], 1e-300)))
    Ur = U[:, :rank]
    x = np.asarray(x, dtype=complex)
    resid = x - Ur @ (Ur.conj().T @ x)
    return bool(np.linalg.norm(resid) <= tol * max(np.linalg.norm(x), 1e-300))


# -- atomic-norm specializations ------------------------------------------------------------

def l1_specialization_check(x, beta_final) -> float:
    """Minimum of L over weights for the orthonormal atoms e_i at fixed beta.

    Per coordinate the optimum is d_i = max(0, |x_i| - beta); the returned
    value tends to sum |x_i| as beta -> 0.
    """
    if not beta_final > 0:
        raise ValueError("beta must be positive")
    ax = np.abs(np.asarray(x, dtype=complex).reshape(-1))
    d = np.maximum(0.0, ax - beta_final)
    return float(0.5 * np.sum(d) + 0.5 * np.sum(ax ** 2 / (d + beta_final)))


def single_atom_norm_check(s, f, n, beta_final) -> float:
    """min over d of L for x = s a(f) with the single atom a(f); tends to |s|."""
    if not beta_final > 0:
        raise ValueError("beta must be positive")
    op = MeasurementOperator.complete(n)
    x = s * _dense_atoms([wrap_freq(f)], op)[:, 0]
    # d/2 + |s|^2 n / (2 (beta + d n)) is minimised at beta + d n = |s| n
    d = max(abs(s) - beta_final / n, 0.0)
    if d == 0.0:
        return 0.5 * float(np.real(np.vdot(x, x))) / beta_final
    return dense_objective([f], [d], beta_final, x, op)


# -- numeric optimal weight -----------------------------------------------------------------

def golden_section(fun, lo, hi, tol=1e-10, max_iter=500):
    a, b = lo, hi
    g = np.longdouble(GOLDEN) if isinstance(a, np.longdouble) else GOLDEN
    c = b - g * (b - a)
    d = a + g * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = fun(d)
    return (c, fc) if fc <= fd else (d, fd)


def numeric_dhat(f, state: DictionaryState, coarse=400) -> tuple[float, float]:
    """Numerically minimise dL(f, d) over d in (0, d_max] by golden-section search.

    The search runs in extended precision: near its minimum dL is flat to
    relative order sqrt(eps |q|), which in double would cap the accuracy of d.
    """
    q, s = dense_quadratics(f, state)
    aq2 = np.longdouble(abs(q)) ** 2
    s_ld = np.longdouble(s)
    one = np.longdouble(1)

    def dL(d):
        d = np.longdouble(d)
        return (d - aq2 / (one / d + s_ld)) / 2

    d_max = 10.0 * max(1.0, abs(q)) / s
    grid = d_max * np.arange(1, coarse + 1) / coarse
    vals = np.array([dL(d) for d in grid], dtype=np.longdouble)
    k = int(np.argmin(vals))
    diffs = np.diff(vals)
    diffs[np.abs(diffs) <= 1e-15 * np.max(np.abs(vals))] = 0
    steps = np.sign(diffs)
    if np.any(steps[:k] > 0) or np.any(steps[k:] < 0):
        raise ValueError("dL is not unimodal on the scan grid")
    if not vals[k] < 0:
        return 0.0, 0.0
    lo = np.longdouble(grid[k - 1]) if k > 0 else np.longdouble(0)
    hi = np.longdouble(grid[min(k + 1, coarse - 1)])
    d, val = golden_section(dL, lo, hi, tol=1e-14)
    return float(d), float(val)


# -- finite-difference gradient -------------------------------------------------------------

def fd_gradient(state: DictionaryState, step=1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Central differences of :func:`dense_objective` in (f_j, log d_j)."""
    if not 1e-8 <= step <= 1e-4:
        raise ValueError("step must lie in [1e-8, 1e-4]")
    f = state.freqs.astype(float)
    rho = np.log(state.weights)
    args = (state.beta, state.y, state.op)

    def L(ff, rr):
        return dense_objective(ff, np.exp(rr), *args)

    g_f = np.empty(state.r)
    g_rho = np.empty(state.r)
    for j in range(state.r):
        e = np.zeros(state.r)
        e[j] = step
        g_f[j] = (L(f + e, rho) - L(f - e, rho)) / (2 * step)
        g_rho[j] = (L(f, rho + e) - L(f, rho - e)) / (2 * step)
    return g_f, g_rho


# -- random states --------------------------------------------------------------------------

def random_state(rng: np.random.Generator, n_range=(4, 64), r_max=8, beta_range=(1e-8, 1.0),
                 weight_range=(0.1, 10.0), compressive=True, y=None,
                 y_scale=None) -> DictionaryState:
    """A state built through the incremental (Woodbury) path.

    ``y_scale=(lo, hi)`` rescales a random y to norm ``u * beta * m`` with u
    uniform in [lo, hi], which bounds |q| by ``u m^{3/2}``; the weights are
    then drawn relative to that same scale.
    """
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    if compressive and rng.random() < 0.5:
        m = int(rng.integers(max(1, n // 2), n + 1))
        op = MeasurementOperator(n, np.sort(rng.choice(n, m, replace=False)))
    else:
        op = MeasurementOperator.complete(n)
    if y is None:
        y = rng.standard_normal(op.m) + 1j * rng.standard_normal(op.m)
    beta = float(np.exp(rng.uniform(np.log(beta_range[0]), np.log(beta_range[1]))))
    wscale = 1.0
    if y_scale is not None:
        u = rng.uniform(*y_scale)
        y = y * (u * beta * op.m / np.linalg.norm(y))
        wscale = beta
    state = state_init(y, op, beta)
    r = int(rng.integers(0, r_max + 1))
    for _ in range(r):
        d = wscale * float(np.exp(rng.uniform(np.log(weight_range[0]), np.log(weight_range[1]))))
        state = add_atom(state, float(rng.random()), d)
    return state


# -- report used by the `verify` command ----------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class VerifyReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def first_failure(self):
        return next((c for c in self.checks if not c.passed), None)

    def text(self) -> str:
        return "\n".join(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}" for c in self.checks)
