"""Sequential atom identification and refinement with beta annealing.

Each beta stage greedily adds the best grid atom, refines all atoms jointly
with damped BFGS, and re-estimates/prunes weights, until no grid atom lowers
the objective. Beta then shrinks geometrically toward a floor.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .model import (
    DimensionError,
    DictionaryState,
    MeasurementOperator,
    add_atom,
    as_signal,
    atom_matrix,
    grid_size,
    quadratics,
    refresh,
    remove_atom,
    set_atoms,
    state_init,
    steering_vector,
    update_weight,
    wrap_distance,
    wrap_freq,
)
from .objective import evaluate, nearest_atom, objective, select_candidate
from .optimize import damped_bfgs, fd_hessian, inverse_from_hessian


class RankDeficientError(ValueError):
    """Atoms are (numerically) linearly dependent, usually duplicate frequencies."""


@dataclass
class SolverConfig:
    gamma: int = 8
    beta_shrink: float = 0.2
    beta_floor_factor: float = 1e-9
    noise_floor: float | None = None
    max_atoms: int | None = None          # None -> m
    refine_max_iters: int = 20
    prune_threshold: float = 1e-8
    inner_max_adds: int | None = None     # None -> m
    refine_weights: bool = True           # False: refine frequencies only
    max_stages: int = 200
    floor_stages: int = 3                 # extra stages allowed once beta sits at the floor
    improvement_tol: float = 1e-12        # candidates must lower L by more than this * |L|
    duplicate_radius_cells: float = 1e-4  # in grid cells 1/(gamma n)
    merge_radius_cells: float = 0.5
    refresh_every: int = 64

    def __post_init__(self):
        if not 0.0 < self.beta_shrink < 1.0:
            raise ValueError("beta_shrink must lie in (0, 1)")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.beta_floor_factor <= 0:
            raise ValueError("beta_floor_factor must be positive")
        if self.noise_floor is not None and self.noise_floor < 0:
            raise ValueError("noise_floor must be nonnegative")
        for name in ("max_atoms", "inner_max_adds"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be positive")
        if self.improvement_tol < 0:
            raise ValueError("improvement_tol must be nonnegative")
        if self.refine_max_iters < 0 or self.max_stages < 1 or self.floor_stages < 1:
            raise ValueError("iteration caps must be positive")


@dataclass
class Estimate:
    freqs: np.ndarray
    gains: np.ndarray
    weights: np.ndarray
    reconstruction: np.ndarray
    objective_trace: list = field(default_factory=list)
    iterations: dict = field(default_factory=dict)
    runtime: float = 0.0
    diagnostics: dict = field(default_factory=dict)


# -- refinement ------------------------------------------------------------------------------

def refine(state: DictionaryState, cfg: SolverConfig, counters: dict | None = None) -> DictionaryState:
    """Jointly refine frequencies (and log-weights) by damped BFGS at fixed beta."""
    if state.r < 1:
        raise ValueError("refine needs at least one atom")
    r = state.r
    op, y, beta = state.op, state.y, state.beta
    f0 = state.freqs.copy()
    rho0 = np.log(state.weights)

    if cfg.refine_weights:
        def fg(x):
            L, gf, gr = evaluate(x[:r], x[r:], beta, y, op)
            return L, np.concatenate([gf, gr])
        x0 = np.concatenate([f0, rho0])
        steps = np.concatenate([np.full(r, 1e-7), np.full(r, 1e-5)])
        cap = np.concatenate([np.full(r, 0.5 / op.n), np.full(r, 2.0)])
    else:
        def fg(x):
            L, gf, _ = evaluate(x, rho0, beta, y, op)
            return L, gf
        x0 = f0
        steps = np.full(r, 1e-7)
        cap = np.full(r, 0.5 / op.n)

    def grad(x):
        return fg(x)[1]

    try:
        H0 = inverse_from_hessian(fd_hessian(grad, x0, steps))
    except np.linalg.LinAlgError:
        H0 = None
    res = damped_bfgs(fg, x0, H0=H0, max_iters=cfg.refine_max_iters, step_cap=cap)
    if counters is not None:
        counters["refine_calls"] = counters.get("refine_calls", 0) + 1
        counters["bfgs_iterations"] = counters.get("bfgs_iterations", 0) + res.iterations
    if res.iterations == 0:
        return refresh(state)
    if cfg.refine_weights:
        freqs, weights = res.x[:r], np.exp(res.x[r:])
    else:
        freqs, weights = res.x, state.weights
    return set_atoms(state, wrap_freq(freqs), weights)


# -- weight re-estimation -------------------------------------------------------------------

def reestimate_and_prune(state: DictionaryState, cfg: SolverConfig) -> DictionaryState:
    """Cyclic exact re-optimisation of each weight with the others held fixed.

    With the full-C quadratics (q_j, s_j) of atom j, the leave-one-out optimum
    is ``d_j + (|q_j| - 1)/s_j``; a nonpositive value prunes the atom.
    """
    j = 0
    while j < state.r:
        q, s = quadratics(state, state.freqs[j])
        d_new = state.weights[j] + (abs(q) - 1.0) / s
        if d_new > 0.0:
            state = update_weight(state, j, d_new)
            j += 1
        else:
            state = remove_atom(state, j)
    if state.r:
        keep = state.weights >= cfg.prune_threshold * np.max(state.weights)
        for j in np.flatnonzero(~keep)[::-1]:
            state = remove_atom(state, int(j))
    return state


# -- gains and reconstruction ---------------------------------------------------------------

def recover_gains(freqs, y, op: MeasurementOperator, rtol: float = 1e-10) -> np.ndarray:
    """Least-squares gains of the truncated atoms, via a QR factorisation."""
    freqs = np.asarray(freqs, dtype=float).reshape(-1)
    y = as_signal(y)
    if freqs.size < 1:
        raise ValueError("need at least one frequency")
    if y.size != op.m:
        raise DimensionError(f"observation has length {y.size}, operator expects m={op.m}")
    A = atom_matrix(freqs, op)
    if freqs.size > op.m:
        raise RankDeficientError("more atoms than measurements; merge duplicate frequencies")
    Q, R = np.linalg.qr(A)
    diag = np.abs(np.diag(R))
    if np.min(diag) <= rtol * np.max(diag):
        raise RankDeficientError("atoms are linearly dependent; merge duplicate frequencies")
    return sla.solve_triangular(R, Q.conj().T @ y)


def reconstruct(freqs, gains, n: int) -> np.ndarray:
    freqs = np.asarray(freqs, dtype=float).reshape(-1)
    gains = np.asarray(gains, dtype=complex).reshape(-1)
    if freqs.size != gains.size:
        raise ValueError("freqs and gains differ in length")
    if freqs.size == 0:
        return np.zeros(n, dtype=complex)
    return np.exp(-2j * np.pi * np.outer(np.arange(n), wrap_freq(freqs))) @ gains


# -- main loop ------------------------------------------------------------------------------

def _merge_close(state: DictionaryState, radius: float) -> tuple[DictionaryState, int]:
    """Drop the lighter atom of any pair closer than ``radius``."""
    merged = 0
    while state.r > 1:
        order = np.argsort(state.freqs, kind="stable")
        f = state.freqs[order]
        gaps = wrap_distance(f, np.roll(f, -1))
        k = int(np.argmin(gaps))
        if not gaps[k] < radius:
            break
        a, b = order[k], order[(k + 1) % len(order)]
        drop = b if state.weights[a] >= state.weights[b] else a
        state = remove_atom(state, int(drop))
        merged += 1
    return state, merged


def _acceptable(cand, state: DictionaryState, cfg: SolverConfig) -> bool:
    """A candidate must beat roundoff in L and survive the relative prune."""
    if cand is None:
        return False
    if -cand.delta <= cfg.improvement_tol * abs(objective(state)):
        return False
    return not (state.r and cand.d_hat < cfg.prune_threshold * np.max(state.weights))


def _insert(state: DictionaryState, cand, cfg: SolverConfig, counters: dict) -> DictionaryState:
    j, dist = nearest_atom(state, cand.f)
    if j >= 0 and dist <= cfg.duplicate_radius_cells / grid_size(state.op.n, cfg.gamma):
        counters["duplicate_merges"] += 1
        return update_weight(state, j, state.weights[j] + cand.d_hat)
    return add_atom(state, cand.f, cand.d_hat)


def _polish(state: DictionaryState, cfg: SolverConfig, counters: dict) -> DictionaryState:
    state = refine(state, cfg, counters)
    return reestimate_and_prune(state, cfg)


def sair_run(y, op: MeasurementOperator, cfg: SolverConfig | None = None) -> Estimate:
    cfg = SolverConfig() if cfg is None else cfg
    t0 = time.perf_counter()
    y = as_signal(y)
    if y.size != op.m:
        raise DimensionError(f"observation has length {y.size}, operator expects m={op.m}")
    n, m = op.n, op.m
    counters = {"stages": 0, "additions": 0, "duplicate_merges": 0, "refine_calls": 0,
                "bfgs_iterations": 0, "final_merges": 0}
    diagnostics = {"cap_overflow": False, "stage_cap_hit": False}

    norm_y = float(np.linalg.norm(y))
    if norm_y == 0.0:
        return Estimate(freqs=np.zeros(0), gains=np.zeros(0, dtype=complex), weights=np.zeros(0),
                        reconstruction=np.zeros(n, dtype=complex), iterations=counters,
                        runtime=time.perf_counter() - t0, diagnostics=diagnostics)

    max_atoms = m if cfg.max_atoms is None else cfg.max_atoms
    inner_max = m if cfg.inner_max_adds is None else cfg.inner_max_adds
    beta0 = norm_y / m
    floor = max(cfg.beta_floor_factor * beta0, cfg.noise_floor or 0.0)
    diagnostics["beta0"] = beta0

    state = state_init(y, op, beta0, refresh_every=cfg.refresh_every)
    trace = []
    beta = beta0
    at_floor = 0
    for _ in range(cfg.max_stages):
        counters["stages"] += 1
        if state.r:
            # warm start: re-solve the inherited dictionary at the new beta;
            # refine() rebuilds C itself, so the caches may be stale here
            stale = set_atoms(state, state.freqs, state.weights, beta=beta, recompute=False)
            state = _polish(stale, cfg, counters)
        else:
            state = set_atoms(state, state.freqs, state.weights, beta=beta)
        adds = 0
        while adds < inner_max:
            cand = select_candidate(state, cfg.gamma)
            if not _acceptable(cand, state, cfg):
                break
            if state.r >= max_atoms:
                diagnostics["cap_overflow"] = True
                break
            state = _insert(state, cand, cfg, counters)
            adds += 1
            counters["additions"] += 1
            state = _polish(state, cfg, counters)
        trace.append((beta, objective(state)))
        if beta <= floor:
            at_floor += 1
            if adds == 0 or at_floor >= cfg.floor_stages:
                break
        beta = max(cfg.beta_shrink * beta, floor)
    else:
        diagnostics["stage_cap_hit"] = True

    radius = cfg.merge_radius_cells / grid_size(n, cfg.gamma)
    state, merged = _merge_close(state, radius)
    counters["final_merges"] = merged
    if merged and state.r:
        state = refine(state, cfg, counters)

    order = np.argsort(state.freqs, kind="stable")
    freqs = state.freqs[order]
    weights = state.weights[order]
    if freqs.size:
        gains = recover_gains(freqs, y, op)
    else:
        gains = np.zeros(0, dtype=complex)
    diagnostics["beta_final"] = state.beta
    return Estimate(
        freqs=freqs, gains=gains, weights=weights,
        reconstruction=reconstruct(freqs, gains, n),
        objective_trace=trace, iterations=counters,
        runtime=time.perf_counter() - t0, diagnostics=diagnostics,
    )
