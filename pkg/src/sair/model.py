"""Signal/measurement model and the dictionary state with a cached covariance inverse.

The covariance is ``C = sum_j d_j phi(f_j) phi(f_j)^H + beta * I`` where ``phi`` is
the steering vector restricted to the sampled indices. ``C^{-1}`` and ``C^{-1} y``
are cached and kept current under rank-one atom insertions, deletions and
weight changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

REFRESH_EVERY = 64
# a rank-one update whose denominator 1 + delta_d phi^H C^{-1} phi leaves [1/x, x]
# cancels about log10(x) digits; the caches are then rebuilt densely
CANCELLATION_LIMIT = 1e2


class DimensionError(ValueError):
    """Observation length does not match the measurement operator."""


def wrap_freq(f):
    """Wrap frequencies into [0, 1)."""
    # np.mod can return exactly 1.0 for tiny negative inputs
    w = np.mod(f, 1.0)
    w = np.where(w >= 1.0, 0.0, w)
    return float(w) if w.ndim == 0 else w


def wrap_distance(a, b):
    """Distance on the frequency torus, min(|a-b|, 1-|a-b|)."""
    d = np.abs(np.mod(np.asarray(a) - np.asarray(b), 1.0))
    return np.minimum(d, 1.0 - d)


def as_signal(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=complex).reshape(-1)
    if x.size < 1:
        raise ValueError("signal must have at least one sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains NaN or Inf")
    return x


@dataclass(frozen=True, eq=False)
class MeasurementOperator:
    """Row subset of the n x n identity, given by sorted sample indices."""

    n: int
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        if self.n < 1:
            raise ValueError("n must be positive")
        if idx.size < 1 or idx.size > self.n:
            raise ValueError(f"need 1 <= m <= n, got m={idx.size}, n={self.n}")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("indices must be strictly increasing")
        if idx[0] < 0 or idx[-1] >= self.n:
            raise ValueError("indices out of range [0, n-1]")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @classmethod
    def complete(cls, n: int) -> "MeasurementOperator":
        return cls(n, np.arange(n))

    @property
    def m(self) -> int:
        return int(self.indices.size)

    @property
    def is_complete(self) -> bool:
        return self.m == self.n

    def apply(self, x) -> np.ndarray:
        return np.asarray(x)[self.indices]

    def __eq__(self, other):
        if not isinstance(other, MeasurementOperator):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.indices, other.indices)

    def __repr__(self):
        return f"MeasurementOperator(n={self.n}, m={self.m})"


def steering_vector(f: float, n: int) -> np.ndarray:
    """Vandermonde atom [1, e^{-2 pi i f}, ..., e^{-2 pi i (n-1) f}]."""
    if n < 1:
        raise ValueError("n must be positive")
    return np.exp(-2j * np.pi * np.arange(n) * wrap_freq(f))


def truncated_atom(f: float, op: MeasurementOperator) -> np.ndarray:
    return np.exp(-2j * np.pi * op.indices * wrap_freq(f))


def atom_matrix(freqs, op: MeasurementOperator) -> np.ndarray:
    """m x r matrix whose columns are truncated atoms."""
    freqs = np.asarray(freqs, dtype=float).reshape(-1)
    return np.exp(-2j * np.pi * np.outer(op.indices, freqs))


def atom_derivative_matrix(freqs, op: MeasurementOperator) -> np.ndarray:
    """Elementwise d/df of :func:`atom_matrix`."""
    t = op.indices[:, None]
    return -2j * np.pi * t * atom_matrix(freqs, op)


def dense_covariance(freqs, weights, beta, op: MeasurementOperator) -> np.ndarray:
    A = atom_matrix(freqs, op)
    C = (A * np.asarray(weights, dtype=float)) @ A.conj().T
    C.flat[::C.shape[0] + 1] += beta
    return C


@dataclass(frozen=True, eq=False)
class DictionaryState:
    """Atoms, weights and beta, plus cached ``C^{-1}`` and ``C^{-1} y``.

    States are treated as values: every operation below returns a new state.
    """

    op: MeasurementOperator
    y: np.ndarray
    freqs: np.ndarray
    weights: np.ndarray
    beta: float
    cinv: np.ndarray
    cinv_y: np.ndarray
    updates_since_refresh: int = 0
    refresh_every: int = field(default=REFRESH_EVERY)
    cancellation_limit: float = field(default=CANCELLATION_LIMIT)

    @property
    def r(self) -> int:
        return int(self.freqs.size)

    @property
    def m(self) -> int:
        return self.op.m

    def covariance(self) -> np.ndarray:
        return dense_covariance(self.freqs, self.weights, self.beta, self.op)


def state_init(y, op: MeasurementOperator, beta0: float, refresh_every: int = REFRESH_EVERY,
               cancellation_limit: float = CANCELLATION_LIMIT) -> DictionaryState:
    """Empty dictionary with ``C = beta0 * I``."""
    y = as_signal(y)
    if y.size != op.m:
        raise DimensionError(f"observation has length {y.size}, operator expects m={op.m}")
    if not beta0 > 0:
        raise ValueError("beta0 must be positive")
    m = op.m
    return DictionaryState(
        op=op, y=y,
        freqs=np.zeros(0), weights=np.zeros(0), beta=float(beta0),
        cinv=np.eye(m, dtype=complex) / beta0, cinv_y=y / beta0,
        refresh_every=refresh_every, cancellation_limit=cancellation_limit,
    )


def _rank_one(state: DictionaryState, phi: np.ndarray, delta_d: float):
    """Woodbury update of the caches for ``C <- C + delta_d * phi phi^H``.

    Returns ``(cinv, cinv_y, denom)``; cinv and cinv_y are None when the
    update is too ill-conditioned to apply and the caller must refresh.
    """
    v = state.cinv @ phi
    denom = 1.0 + delta_d * np.real(np.vdot(phi, v))
    lim = state.cancellation_limit
    if not (denom > 0 and (not lim or 1.0 / lim <= denom <= lim)):
        return None, None, denom
    cinv = state.cinv - (delta_d / denom) * np.outer(v, v.conj())
    cinv = 0.5 * (cinv + cinv.conj().T)
    cinv_y = state.cinv_y - (delta_d * np.vdot(v, state.y) / denom) * v
    return cinv, cinv_y, denom


def _apply(state: DictionaryState, phi, delta_d, **changes) -> DictionaryState:
    cinv, cinv_y, _ = _rank_one(state, phi, delta_d)
    if cinv is None:
        return refresh(replace(state, **changes))
    new = replace(state, cinv=cinv, cinv_y=cinv_y,
                  updates_since_refresh=state.updates_since_refresh + 1, **changes)
    if state.refresh_every and new.updates_since_refresh >= state.refresh_every:
        new = refresh(new)
    return new


def add_atom(state: DictionaryState, f: float, d: float) -> DictionaryState:
    if not d > 0:
        raise ValueError(f"atom weight must be positive, got {d}")
    f = wrap_freq(f)
    return _apply(state, truncated_atom(f, state.op), float(d),
                  freqs=np.append(state.freqs, f), weights=np.append(state.weights, float(d)))


def _check_index(state: DictionaryState, j: int):
    if not 0 <= j < state.r:
        raise IndexError(f"atom index {j} out of range for r={state.r}")


def remove_atom(state: DictionaryState, j: int) -> DictionaryState:
    _check_index(state, j)
    return _apply(state, truncated_atom(state.freqs[j], state.op), -state.weights[j],
                  freqs=np.delete(state.freqs, j), weights=np.delete(state.weights, j))


def update_weight(state: DictionaryState, j: int, d_new: float) -> DictionaryState:
    _check_index(state, j)
    if not d_new > 0:
        raise ValueError(f"atom weight must be positive, got {d_new}")
    inc = float(d_new) - state.weights[j]
    if inc == 0.0:
        return state
    weights = state.weights.copy()
    weights[j] = d_new
    return _apply(state, truncated_atom(state.freqs[j], state.op), inc, weights=weights)


def apply_covariance(freqs, weights, beta, op: MeasurementOperator, V) -> np.ndarray:
    """``C @ V`` without forming C, so beta enters exactly."""
    A = atom_matrix(freqs, op)
    return beta * V + (A * np.asarray(weights, dtype=float)) @ (A.conj().T @ V)


def refresh(state: DictionaryState, refine_steps: int = 2) -> DictionaryState:
    """Recompute both caches from a Cholesky factorization of the dense C.

    Forming C rounds beta against the atom terms (relative error ~ eps*|C|/beta),
    which matters for ``C^{-1} y`` once y is nearly explained by the atoms. When
    that error is not negligible ``C^{-1} y`` is polished by iterative refinement
    with residuals taken in operator form.
    """
    C = state.covariance()
    try:
        factor = sla.cho_factor(C, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("covariance is numerically singular") from exc
    eye = np.eye(state.m, dtype=complex)
    cinv = sla.cho_solve(factor, eye, check_finite=False)
    u = cinv @ state.y
    if state.r and np.finfo(float).eps * np.real(np.trace(C)) > 1e-14 * state.beta:
        args = (state.freqs, state.weights, state.beta, state.op)
        # Newton-Schulz step X <- X + X (I - C X)
        cinv = cinv + cinv @ (eye - apply_covariance(*args, cinv))
        for _ in range(refine_steps):
            u = u + cinv @ (state.y - apply_covariance(*args, u))
    cinv = 0.5 * (cinv + cinv.conj().T)
    return replace(state, cinv=cinv, cinv_y=u, updates_since_refresh=0)


def set_atoms(state: DictionaryState, freqs, weights, beta: float | None = None,
              recompute: bool = True) -> DictionaryState:
    """Replace the whole dictionary (and optionally beta) and refresh the caches.

    With ``recompute=False`` the caches are left stale; the caller must refresh
    before using them.
    """
    weights = np.asarray(weights, dtype=float).reshape(-1).copy()
    freqs = wrap_freq(np.asarray(freqs, dtype=float).reshape(-1)).copy()
    if freqs.shape != weights.shape:
        raise ValueError("freqs and weights differ in length")
    if np.any(weights <= 0):
        raise ValueError("atom weights must be positive")
    beta = state.beta if beta is None else float(beta)
    if not beta > 0:
        raise ValueError("beta must be positive")
    new = replace(state, freqs=freqs, weights=weights, beta=beta)
    return refresh(new) if recompute else new


def quadratics(state: DictionaryState, f: float) -> tuple[complex, float]:
    """``q = phi^H C^{-1} y`` and ``s = phi^H C^{-1} phi`` at frequency f."""
    phi = truncated_atom(f, state.op)
    q = np.vdot(phi, state.cinv_y)
    s = float(np.real(np.vdot(phi, state.cinv @ phi)))
    return complex(q), s


def grid_size(n: int, gamma: int) -> int:
    return gamma * n


def grid_frequencies(n: int, gamma: int) -> np.ndarray:
    """Candidate grid k/(gamma n), k = 1 .. gamma n - 1 (zero excluded)."""
    N = grid_size(n, gamma)
    return np.arange(1, N) / N


def grid_quadratics(state: DictionaryState, gamma: int, fast: bool = True):
    """``(freqs, q, s)`` over the candidate grid.

    The fast path uses one zero-padded inverse FFT of the scattered ``C^{-1} y``
    for q, and one of the lag-collapsed ``C^{-1}`` for s.
    """
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    op = state.op
    N = grid_size(op.n, gamma)
    grid = grid_frequencies(op.n, gamma)
    if not fast:
        qs = [quadratics(state, f) for f in grid]
        q = np.array([a for a, _ in qs])
        s = np.array([b for _, b in qs])
        return grid, q, s

    # q(k) = sum_t u_t e^{+2 pi i t k / N}
    buf = np.zeros(N, dtype=complex)
    buf[op.indices % N] += state.cinv_y
    q = np.fft.ifft(buf) * N

    # s(k) = sum_{a,b} cinv_ab e^{+2 pi i (t_a - t_b) k / N}
    lags = (op.indices[:, None] - op.indices[None, :]) % N
    flat = lags.ravel()
    c = (np.bincount(flat, weights=state.cinv.real.ravel(), minlength=N)
         + 1j * np.bincount(flat, weights=state.cinv.imag.ravel(), minlength=N))
    s = np.real(np.fft.ifft(c) * N)
    return grid, q[1:], s[1:]
