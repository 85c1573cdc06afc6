import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sair.model import (
    DimensionError,
    MeasurementOperator,
    add_atom,
    as_signal,
    dense_covariance,
    grid_frequencies,
    grid_quadratics,
    quadratics,
    refresh,
    remove_atom,
    state_init,
    steering_vector,
    truncated_atom,
    update_weight,
    wrap_distance,
    wrap_freq,
)
from sair.oracles import dense_quadratics, inverse_residual, random_state


def inv_err(state):
    return np.max(np.abs(state.cinv @ state.covariance() - np.eye(state.m)))


def rand_y(rng, m):
    return rng.standard_normal(m) + 1j * rng.standard_normal(m)


# -- signals and operators ------------------------------------------------------------------

def test_steering_vector_examples():
    np.testing.assert_allclose(steering_vector(0.0, 4), [1, 1, 1, 1], atol=1e-15)
    np.testing.assert_allclose(steering_vector(0.5, 4), [1, -1, 1, -1], atol=1e-15)
    np.testing.assert_allclose(steering_vector(0.25, 4), [1, -1j, -1, 1j], atol=1e-15)


@given(st.floats(0, 1, exclude_max=True), st.integers(1, 256))
def test_steering_norm(f, n):
    a = steering_vector(f, n)
    assert abs(np.vdot(a, a).real - n) <= 1e-12 * n


def test_truncated_atom_examples():
    np.testing.assert_allclose(truncated_atom(0.5, MeasurementOperator(4, [0, 2])), [1, 1], atol=1e-15)
    np.testing.assert_allclose(truncated_atom(0.25, MeasurementOperator(4, [1, 3])), [-1j, 1j], atol=1e-15)
    op = MeasurementOperator.complete(7)
    np.testing.assert_array_equal(truncated_atom(0.137, op), steering_vector(0.137, 7))


def test_operator_validation():
    with pytest.raises(ValueError):
        MeasurementOperator(4, [2, 1])
    with pytest.raises(ValueError):
        MeasurementOperator(4, [0, 0])
    with pytest.raises(ValueError):
        MeasurementOperator(4, [0, 4])
    with pytest.raises(ValueError):
        MeasurementOperator(4, [])
    assert MeasurementOperator(3, [0, 1, 2]).is_complete


def test_as_signal_rejects_bad_input():
    with pytest.raises(ValueError):
        as_signal([])
    with pytest.raises(ValueError):
        as_signal([1.0, np.nan])


@given(st.floats(-10, 10, allow_nan=False))
def test_wrap_freq_range(f):
    w = wrap_freq(f)
    assert 0.0 <= w < 1.0


def test_wrap_distance():
    assert wrap_distance(0.999, 0.001) == pytest.approx(0.002)
    assert wrap_distance(0.25, 0.75) == pytest.approx(0.5)


# -- state and rank-one updates -------------------------------------------------------------

def test_state_init_examples():
    rng = np.random.default_rng(0)
    y = rand_y(rng, 5)
    s = state_init(y, MeasurementOperator.complete(5), 2.0)
    np.testing.assert_allclose(np.diag(s.cinv), 0.5)
    from sair.objective import objective
    assert objective(s) == pytest.approx(np.vdot(y, y).real / 4.0)
    with pytest.raises(DimensionError):
        state_init(np.ones(3), MeasurementOperator.complete(4), 1.0)
    with pytest.raises(ValueError):
        state_init(np.ones(3), MeasurementOperator.complete(3), 0.0)


def test_add_tiny_weight_leaves_cinv():
    rng = np.random.default_rng(1)
    s = random_state(rng, beta_range=(0.1, 1.0))
    d = 1e-12
    t = add_atom(s, 0.3, d)
    bound = d * s.m * np.max(np.abs(s.cinv)) ** 2 * s.m
    assert np.max(np.abs(t.cinv - s.cinv)) <= bound


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_add_remove_dense_inverse(seed):
    rng = np.random.default_rng(seed)
    s = random_state(rng, beta_range=(1e-3, 1.0))
    f, d = float(rng.random()), float(rng.uniform(0.1, 10))
    t = add_atom(s, f, d)
    assert inv_err(t) <= 1e-8
    back = remove_atom(t, t.r - 1)
    assert np.max(np.abs(back.cinv - s.cinv)) <= 1e-8
    np.testing.assert_array_equal(back.freqs, s.freqs)


def test_remove_only_atom_matches_init():
    rng = np.random.default_rng(2)
    op = MeasurementOperator.complete(8)
    y = rand_y(rng, 8)
    s0 = state_init(y, op, 0.5)
    s = remove_atom(add_atom(s0, 0.2, 1.5), 0)
    assert s.r == 0
    np.testing.assert_allclose(s.cinv, s0.cinv, atol=1e-12)
    np.testing.assert_allclose(s.cinv_y, s0.cinv_y, atol=1e-12)
    with pytest.raises(IndexError):
        remove_atom(s0, 0)


def test_update_weight_examples():
    rng = np.random.default_rng(3)
    s = random_state(rng, beta_range=(1e-2, 1.0))
    while s.r < 2:
        s = add_atom(s, float(rng.random()), 1.0)
    same = update_weight(s, 0, s.weights[0])
    assert np.max(np.abs(same.cinv - s.cinv)) <= 1e-12
    a = update_weight(s, 1, 3.7)
    b = add_atom(remove_atom(s, 1), s.freqs[1], 3.7)
    assert np.max(np.abs(a.cinv - b.cinv)) <= 1e-8
    assert inv_err(a) <= 1e-8
    with pytest.raises(ValueError):
        update_weight(s, 0, -1.0)


def test_refresh_examples():
    rng = np.random.default_rng(4)
    s = random_state(rng, beta_range=(0.1, 1.0))
    assert inv_err(refresh(s)) <= 1e-12
    op = MeasurementOperator.complete(6)
    e = refresh(state_init(rand_y(rng, 6), op, 0.25))
    np.testing.assert_allclose(e.cinv, 4.0 * np.eye(6))


def test_refresh_after_many_updates_drift():
    rng = np.random.default_rng(5)
    op = MeasurementOperator(32, np.sort(rng.choice(32, 24, replace=False)))
    s = state_init(rand_y(rng, 24), op, 0.1, refresh_every=10**6, cancellation_limit=np.inf)
    for i in range(50):
        if s.r > 3 and rng.random() < 0.3:
            s = remove_atom(s, int(rng.integers(s.r)))
        elif s.r and rng.random() < 0.3:
            s = update_weight(s, int(rng.integers(s.r)), float(rng.uniform(0.1, 5)))
        else:
            s = add_atom(s, float(rng.random()), float(rng.uniform(0.1, 5)))
    assert s.updates_since_refresh == 50
    assert np.max(np.abs(refresh(s).cinv - s.cinv)) <= 1e-6


def test_auto_refresh_counter():
    rng = np.random.default_rng(6)
    s = state_init(rand_y(rng, 8), MeasurementOperator.complete(8), 1.0, refresh_every=4)
    for k in range(1, 9):
        s = add_atom(s, k / 9.0, 1.0)
    assert s.updates_since_refresh == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_reachable_states_invariants(seed):
    rng = np.random.default_rng(seed)
    s = random_state(rng, beta_range=(1e-3, 1.0))
    assert inverse_residual(s) <= 1e-8
    assert np.max(np.abs(s.cinv - s.cinv.conj().T)) <= 1e-12
    direct = s.cinv @ s.y
    assert np.linalg.norm(s.cinv_y - direct) <= 1e-10 * np.linalg.norm(direct)


# -- quadratics and the grid ----------------------------------------------------------------

def test_quadratics_examples():
    n, f0, beta = 16, 0.3125, 0.5
    op = MeasurementOperator.complete(n)
    s = state_init(steering_vector(f0, n), op, beta)
    q, sv = quadratics(s, f0)
    assert q == pytest.approx(n / beta) and sv == pytest.approx(n / beta)
    q, _ = quadratics(s, f0 + 1.0 / n)  # orthogonal DFT atom
    assert abs(q) <= 1e-12


def test_quadratics_match_dense():
    rng = np.random.default_rng(7)
    for _ in range(20):
        s = random_state(rng, r_max=1, beta_range=(1e-3, 1.0))
        f = float(rng.random())
        q, sv = quadratics(s, f)
        qd, sd = dense_quadratics(f, s)
        assert abs(q - qd) <= 1e-10 * max(abs(qd), 1e-300)
        assert abs(sv - sd) <= 1e-10 * sd
        assert sv > 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_grid_fast_matches_naive(seed, gamma):
    rng = np.random.default_rng(seed)
    s = random_state(rng, n_range=(4, 32), beta_range=(1e-3, 1.0))
    g1, q1, s1 = grid_quadratics(s, gamma, fast=True)
    g2, q2, s2 = grid_quadratics(s, gamma, fast=False)
    np.testing.assert_array_equal(g1, g2)
    assert np.max(np.abs(q1 - q2)) <= 1e-10 * max(np.max(np.abs(q2)), 1e-300)
    assert np.max(np.abs(s1 - s2)) <= 1e-10 * np.max(s2)
    assert np.all(s1 > 0)


def test_grid_empty_state_and_size():
    rng = np.random.default_rng(8)
    op = MeasurementOperator(16, [0, 3, 5, 9, 12])
    s = state_init(rand_y(rng, 5), op, 0.2)
    grid, q, sv = grid_quadratics(s, 4)
    assert grid.size == q.size == sv.size == 4 * 16 - 1
    np.testing.assert_allclose(sv, 5 / 0.2)
    np.testing.assert_allclose(grid, grid_frequencies(16, 4))
    assert grid[0] == pytest.approx(1 / 64)


def test_dense_covariance_hermitian():
    op = MeasurementOperator.complete(5)
    C = dense_covariance([0.1, 0.7], [1.0, 2.0], 0.3, op)
    np.testing.assert_allclose(C, C.conj().T, atol=1e-15)
